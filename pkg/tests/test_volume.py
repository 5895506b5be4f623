import json

import numpy as np
import pytest

from mrimotion.errors import BoundsError, DimensionError, ValidationError
from mrimotion.volume import (
    Image2D,
    KSpace,
    Volume,
    extract_slice,
    fft3_centered,
    ifft3_centered,
    load_volume,
    magnitude,
    save_volume,
    write_pgm16,
)

from oracles import centered_dft3, centered_idft3


def random_volume(dims, seed=0):
    rng = np.random.default_rng(seed)
    return Volume(rng.normal(size=dims))


class TestVolumeType:
    def test_data_is_read_only(self):
        v = random_volume((4, 4, 4))
        with pytest.raises(ValueError):
            v.data[0, 0, 0] = 1.0

    def test_rejects_non_3d(self):
        with pytest.raises(DimensionError):
            Volume(np.zeros((4, 4)))

    def test_rejects_non_finite(self):
        data = np.zeros((4, 4, 4))
        data[1, 2, 3] = np.inf
        with pytest.raises(ValidationError):
            Volume(data)

    def test_rejects_bad_spacing(self):
        with pytest.raises(ValidationError):
            Volume(np.zeros((4, 4, 4)), spacing=(1.0, 0.0, 1.0))

    def test_axis_labels_must_name_one_pe(self):
        with pytest.raises(ValidationError):
            Volume(np.zeros((4, 4, 4)), axis_labels=("a", "b", "c"))
        with pytest.raises(ValidationError):
            Volume(np.zeros((4, 4, 4)), axis_labels=("pe", "pe", "sl"))

    def test_pe_axis_follows_labels(self):
        v = Volume(np.zeros((4, 4, 4)), axis_labels=("ro", "pe", "sl"))
        assert v.pe_axis == 1

    def test_with_data_keeps_metadata(self):
        v = Volume(np.zeros((4, 4, 4)), spacing=(2.0, 1.0, 1.0), name="x")
        w = v.with_data(np.ones((4, 4, 4)))
        assert w.spacing == (2.0, 1.0, 1.0)
        assert w.name == "x"

    def test_kspace_requires_centered(self):
        with pytest.raises(ValidationError):
            KSpace(np.zeros((4, 4, 4), dtype=complex), centered=False)

    def test_image2d_rejects_3d(self):
        with pytest.raises(DimensionError):
            Image2D(np.zeros((4, 4, 4)))


class TestCenteredTransforms:
    @pytest.mark.parametrize("dims", [(4, 4, 4), (5, 5, 5), (3, 4, 5), (8, 2, 7), (6, 5, 4)])
    def test_matches_brute_force_dft(self, dims):
        v = random_volume(dims, seed=sum(dims))
        spec = fft3_centered(v).data
        assert np.abs(spec - centered_dft3(v.data)).max() < 1e-10

    @pytest.mark.parametrize("dims", [(4, 4, 4), (5, 3, 7)])
    def test_inverse_matches_brute_force(self, dims):
        v = random_volume(dims, seed=1)
        k = fft3_centered(v)
        assert np.abs(ifft3_centered(k) - centered_idft3(k.data)).max() < 1e-12

    def test_round_trip(self):
        v = random_volume((8, 6, 5), seed=2)
        assert np.abs(ifft3_centered(fft3_centered(v)) - v.data).max() < 1e-12

    def test_dc_sits_at_center_index(self):
        v = Volume(np.full((6, 7, 5), 2.0))
        spec = fft3_centered(v).data
        c = (3, 3, 2)
        assert abs(spec[c] - 2.0 * v.data.size) < 1e-9
        spec_rest = spec.copy()
        spec_rest[c] = 0
        assert np.abs(spec_rest).max() < 1e-9

    def test_parseval(self):
        v = random_volume((16, 16, 16), seed=3)
        spec = fft3_centered(v).data
        lhs = np.sum(np.abs(v.data) ** 2)
        rhs = np.sum(np.abs(spec) ** 2) / v.data.size
        assert abs(lhs - rhs) / lhs < 1e-12

    def test_magnitude_uses_like_metadata(self):
        v = Volume(np.ones((4, 4, 4)), spacing=(2.0, 2.0, 2.0), name="m")
        out = magnitude(ifft3_centered(fft3_centered(v)), like=v)
        assert out.spacing == (2.0, 2.0, 2.0)
        assert np.abs(out.data - 1.0).max() < 1e-12


class TestExtractSlice:
    def test_values_and_provenance(self):
        v = Volume(np.arange(60.0).reshape(3, 4, 5), name="vol")
        img = extract_slice(v, 1, 2)
        assert np.array_equal(img.data, v.data[:, 2, :])
        assert img.provenance == ("vol", 1, 2)

    def test_out_of_range_names_axis(self):
        v = random_volume((3, 4, 5))
        with pytest.raises(BoundsError, match="'ro'"):
            extract_slice(v, 1, 4)

    def test_bad_axis(self):
        with pytest.raises(BoundsError):
            extract_slice(random_volume((3, 4, 5)), 3, 0)


class TestVolumeFile:
    def test_round_trip(self, tmp_path):
        v = Volume(np.float32(np.random.default_rng(4).normal(size=(5, 6, 7))).astype(float),
                   spacing=(1.0, 2.0, 0.5), name="rt")
        save_volume(v, tmp_path / "vol")
        w = load_volume(tmp_path / "vol")
        assert np.array_equal(w.data, v.data)  # float32-representable values
        assert w.spacing == v.spacing
        assert w.name == "rt"

    def test_header_contents(self, tmp_path):
        save_volume(random_volume((3, 4, 5)), tmp_path / "vol")
        header = json.loads((tmp_path / "vol.json").read_text())
        assert header["dims"] == [3, 4, 5]
        assert header["value_type"] == "float32 little-endian"
        assert header["index_order"] == "C (first axis slowest)"
        assert (tmp_path / header["data_file"]).stat().st_size == 3 * 4 * 5 * 4

    def test_payload_is_little_endian_c_order(self, tmp_path):
        v = Volume(np.arange(24.0).reshape(2, 3, 4))
        save_volume(v, tmp_path / "vol")
        payload = np.frombuffer((tmp_path / "vol.raw").read_bytes(), dtype="<f4")
        assert np.array_equal(payload, np.arange(24.0, dtype=np.float32))

    def test_missing_header(self, tmp_path):
        with pytest.raises(ValidationError, match="vol.json"):
            load_volume(tmp_path / "vol")

    def test_size_mismatch(self, tmp_path):
        save_volume(random_volume((3, 4, 5)), tmp_path / "vol")
        (tmp_path / "vol.raw").write_bytes(b"\x00" * 16)
        with pytest.raises(DimensionError):
            load_volume(tmp_path / "vol")


class TestPgm16:
    def test_format_and_scaling(self, tmp_path):
        img = Image2D(np.array([[0.0, 1.0], [0.5, 0.25]]), provenance=("v", 2, 7))
        path = write_pgm16(img, tmp_path / "img.pgm")
        blob = path.read_bytes()
        header, payload = blob.split(b"65535\n", 1)
        assert header == b"P5\n2 2\n"
        vals = np.frombuffer(payload, dtype=">u2").reshape(2, 2)
        assert vals[0, 0] == 0 and vals[0, 1] == 65535
        assert vals[1, 0] == round(0.5 * 65535)
        sidecar = json.loads((tmp_path / "img.pgm.json").read_text())
        assert sidecar["min"] == 0.0 and sidecar["max"] == 1.0
        assert sidecar["provenance"] == ["v", 2, 7]

    def test_constant_image_maps_to_zero(self, tmp_path):
        img = Image2D(np.full((3, 3), 4.2))
        path = write_pgm16(img, tmp_path / "flat.pgm")
        payload = path.read_bytes().split(b"65535\n", 1)[1]
        assert np.frombuffer(payload, dtype=">u2").max() == 0
