"""Tests for foreground estimation and the normalization contract."""

import numpy as np
import pytest

from mrimotion.errors import DegenerateInputError, DimensionError, ValidationError
from mrimotion.phantom import Ellipsoid, PhantomSpec, generate, random_spec, standard_spec
from mrimotion.preprocess import (
    TARGET_MEAN,
    TARGET_STD,
    ForegroundConfig,
    ForegroundMask,
    NormalizationRecord,
    denormalize,
    estimate_foreground,
    normalize,
)
from mrimotion.volume import Volume

from oracles import closing_brute


def volume_from(data):
    return Volume(np.asarray(data, dtype=np.float64))


class TestForegroundMaskType:
    def test_values_must_be_binary(self):
        with pytest.raises(ValidationError):
            ForegroundMask(np.full((4, 4, 4), 2))

    def test_must_be_3d(self):
        with pytest.raises(DimensionError):
            ForegroundMask(np.zeros((4, 4)))

    def test_count_and_bool_array(self):
        m = np.zeros((4, 4, 4))
        m[1:3, 1:3, 1:3] = 1
        mask = ForegroundMask(m)
        assert mask.count == 8
        assert mask.bool_array.dtype == bool
        assert mask.dims == (4, 4, 4)


class TestForegroundConfig:
    def test_fraction_range(self):
        with pytest.raises(ValidationError):
            ForegroundConfig(fraction=0.0)
        with pytest.raises(ValidationError):
            ForegroundConfig(fraction=1.0)

    def test_iterations_nonnegative(self):
        with pytest.raises(ValidationError):
            ForegroundConfig(iterations=-1)


class TestEstimateForeground:
    def test_solid_cube_is_a_fixed_point(self):
        data = np.zeros((16, 16, 16))
        data[5:11, 5:11, 5:11] = 1.0
        mask = estimate_foreground(volume_from(data), ForegroundConfig(iterations=2))
        np.testing.assert_array_equal(mask.bool_array, data > 0)

    def test_sphere_mask_within_analytic_bounds(self):
        n = 32
        spec = PhantomSpec((Ellipsoid((0.5, 0.5, 0.5), (0.25, 0.25, 0.25)),))
        v = generate(spec, (n, n, n))
        mask = estimate_foreground(v, ForegroundConfig(iterations=2)).bool_array
        centers = np.indices((n, n, n)) + 0.5
        dist = np.sqrt(((centers - n / 2.0) ** 2).sum(axis=0))
        inner = dist <= 0.25 * n
        outer = dist <= 0.25 * n + 2 * np.sqrt(3.0)
        assert np.all(inner <= mask)
        assert np.all(mask <= outer)

    def test_isolated_voxel_survives_closing(self):
        # dilation of a point grows a 3^3 block; the full-neighborhood
        # erosion then recovers exactly the point, so closing keeps it
        data = np.zeros((5, 5, 5))
        data[2, 2, 2] = 1.0
        mask = estimate_foreground(volume_from(data), ForegroundConfig(iterations=1))
        want = closing_brute(data > 0, iterations=1)
        np.testing.assert_array_equal(mask.bool_array, want)
        assert mask.bool_array[2, 2, 2]
        assert mask.count == 1

    def test_matches_brute_closing_on_random_phantom(self):
        v = generate(random_spec(4), (20, 20, 20))
        cfg = ForegroundConfig(fraction=0.1, iterations=2)
        mask = estimate_foreground(v, cfg).bool_array
        seed_mask = v.data > cfg.fraction * np.percentile(v.data, 99)
        np.testing.assert_array_equal(mask, closing_brute(seed_mask, iterations=2))

    def test_zero_iterations_is_pure_threshold(self):
        v = generate(random_spec(9), (16, 16, 16))
        cfg = ForegroundConfig(fraction=0.2, iterations=0)
        mask = estimate_foreground(v, cfg).bool_array
        np.testing.assert_array_equal(mask, v.data > 0.2 * np.percentile(v.data, 99))

    def test_constant_volume_rejected(self):
        with pytest.raises(DegenerateInputError):
            estimate_foreground(volume_from(np.full((8, 8, 8), 3.0)))

    def test_idempotent_on_masked_volume(self):
        v = generate(standard_spec(), (32, 32, 32))
        cfg = ForegroundConfig()
        mask = estimate_foreground(v, cfg)
        again = estimate_foreground(v.with_data(v.data * mask.bool_array), cfg)
        np.testing.assert_array_equal(again.data, mask.data)


class TestNormalize:
    def test_foreground_statistics_hit_targets(self):
        for seed in range(5):
            v = generate(random_spec(seed), (24, 24, 24))
            mask = estimate_foreground(v)
            out, rec = normalize(v, mask)
            fg = mask.bool_array
            assert out.data[fg].mean() == pytest.approx(TARGET_MEAN, abs=1e-9)
            assert out.data[fg].std() == pytest.approx(TARGET_STD, abs=1e-9)
            assert np.all(out.data[~fg] == 0.0)
            assert rec.original_mean == pytest.approx(v.data[fg].mean())
            assert rec.original_std == pytest.approx(v.data[fg].std())

    def test_already_normalized_input_is_unchanged(self):
        v = generate(random_spec(2), (16, 16, 16))
        mask = estimate_foreground(v)
        out1, _ = normalize(v, mask)
        out2, rec2 = normalize(out1, mask)
        fg = mask.bool_array
        np.testing.assert_allclose(out2.data[fg], out1.data[fg], atol=1e-12)
        assert rec2.original_mean == pytest.approx(TARGET_MEAN, abs=1e-12)
        assert rec2.original_std == pytest.approx(TARGET_STD, abs=1e-12)

    def test_scaling_invariance(self):
        v = generate(random_spec(6), (16, 16, 16))
        mask = estimate_foreground(v)
        out1, _ = normalize(v, mask)
        out2, _ = normalize(v.with_data(v.data * 37.5), mask)
        np.testing.assert_allclose(out2.data, out1.data, atol=1e-12)

    def test_empty_foreground_rejected(self):
        v = generate(random_spec(0), (16, 16, 16))
        with pytest.raises(DegenerateInputError):
            normalize(v, ForegroundMask(np.zeros((16, 16, 16))))

    def test_zero_variance_foreground_rejected(self):
        data = np.zeros((8, 8, 8))
        data[2:5, 2:5, 2:5] = 1.0
        m = np.zeros((8, 8, 8))
        m[2:5, 2:5, 2:5] = 1
        with pytest.raises(DegenerateInputError):
            normalize(volume_from(data), ForegroundMask(m))

    def test_dims_mismatch_rejected(self):
        v = generate(random_spec(1), (16, 16, 16))
        with pytest.raises(DimensionError):
            normalize(v, ForegroundMask(np.ones((8, 8, 8))))


class TestDenormalize:
    def test_round_trip_on_foreground(self):
        v = generate(random_spec(3), (24, 24, 24))
        mask = estimate_foreground(v)
        out, rec = normalize(v, mask)
        back = denormalize(out, rec, mask)
        fg = mask.bool_array
        np.testing.assert_allclose(back.data[fg], v.data[fg], rtol=1e-9)
        assert np.all(back.data[~fg] == 0.0)

    def test_identity_record_is_identity_map(self):
        v = generate(random_spec(5), (16, 16, 16))
        mask = estimate_foreground(v)
        out, _ = normalize(v, mask)
        rec = NormalizationRecord(TARGET_MEAN, TARGET_STD)
        same = denormalize(out, rec, mask)
        np.testing.assert_allclose(same.data, out.data, atol=1e-12)

    def test_hand_case_mean_200_std_60(self):
        data = np.zeros((4, 4, 4))
        data[0, 0, 0] = 0.5
        data[0, 0, 1] = 0.5 + 1.0 / 6.0
        m = np.zeros((4, 4, 4))
        m[0, 0, 0] = m[0, 0, 1] = 1
        rec = NormalizationRecord(200.0, 60.0)
        out = denormalize(volume_from(data), rec, ForegroundMask(m))
        assert out.data[0, 0, 0] == pytest.approx(200.0)
        assert out.data[0, 0, 1] == pytest.approx(260.0)


class TestNormalizationRecord:
    def test_dict_round_trip(self):
        rec = NormalizationRecord(12.5, 3.25)
        assert NormalizationRecord.from_dict(rec.as_dict()) == rec

    def test_std_must_be_positive(self):
        with pytest.raises(ValidationError):
            NormalizationRecord(1.0, 0.0)
        with pytest.raises(ValidationError):
            NormalizationRecord(1.0, float("nan"))
