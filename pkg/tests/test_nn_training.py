"""Optimizer, training loop, and weight persistence tests."""

import numpy as np
import pytest

from mrimotion.errors import TrainingDivergenceError, ValidationError
from mrimotion.motion import RigidMotion, MotionTrajectory, TrajectorySegment, corrupt
from mrimotion.nn.model import NetworkConfig, build_network, forward, mse_loss
from mrimotion.nn.training import (
    RmsState,
    TrainConfig,
    load_loss_csv,
    rmsprop_step,
    save_loss_csv,
    train,
)
from mrimotion.nn.weights_io import load_weights, save_weights
from mrimotion.phantom import generate, standard_spec
from mrimotion.preprocess import estimate_foreground, normalize

TINY = NetworkConfig(levels=1, channels=(1,), convs_per_level=1)


def zero_grads(p):
    return ([np.zeros_like(w) for w in p.weights],
            [np.zeros_like(b) for b in p.biases])


class TestTrainConfig:
    def test_validation(self):
        with pytest.raises(ValidationError):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(ValidationError):
            TrainConfig(rho=1.0)
        with pytest.raises(ValidationError):
            TrainConfig(decay=-0.1)
        with pytest.raises(ValidationError):
            TrainConfig(batch_size=0)


class TestRmspropStep:
    def test_single_scalar_update(self):
        # w=1, g=0.5, v=0, lr=1e-3, rho=0.9, eps=1e-8:
        # v' = 0.025, w' = 1 - 1e-3 * 0.5 / (sqrt(0.025) + 1e-8)
        p = build_network(TINY, 0)
        p.weights[0][:] = 0.0
        p.weights[0][0, 0, 0, 0] = 1.0
        grads = zero_grads(p)
        grads[0][0][0, 0, 0, 0] = 0.5
        cfg = TrainConfig(learning_rate=0.001, rho=0.9, epsilon=1e-8)
        p2, s2 = rmsprop_step(p, grads, RmsState.zeros_like(p), cfg)
        assert p2.weights[0][0, 0, 0, 0] == pytest.approx(0.99683772, abs=1e-8)
        assert s2.v_weights[0][0, 0, 0, 0] == pytest.approx(0.025)
        assert s2.step == 1

    def test_zero_gradient_is_a_fixed_point(self):
        p = build_network(TINY, 1)
        cfg = TrainConfig()
        p2, s2 = rmsprop_step(p, zero_grads(p), RmsState.zeros_like(p), cfg)
        for w, w2 in zip(p.weights, p2.weights):
            np.testing.assert_array_equal(w, w2)
        for b, b2 in zip(p.biases, p2.biases):
            np.testing.assert_array_equal(b, b2)

    def test_accumulator_recurrence(self):
        p = build_network(TINY, 2)
        g = zero_grads(p)
        g[0][0][0, 0, 0, 0] = 2.0
        cfg = TrainConfig(rho=0.9)
        _, s1 = rmsprop_step(p, g, RmsState.zeros_like(p), cfg)
        _, s2 = rmsprop_step(p, g, s1, cfg)
        assert s1.v_weights[0][0, 0, 0, 0] == pytest.approx(0.4)
        assert s2.v_weights[0][0, 0, 0, 0] == pytest.approx(0.9 * 0.4 + 0.1 * 4.0)
        assert s2.step == 2

    def test_decay_schedule_uses_completed_steps(self):
        p = build_network(TINY, 3)
        p.weights[0][:] = 0.0
        g = zero_grads(p)
        g[0][0][0, 0, 0, 0] = 1.0
        cfg = TrainConfig(learning_rate=0.1, rho=0.5, decay=1.0, epsilon=1e-12)
        # step 0: lr/(1+0) = 0.1, v=0.5, delta = 0.1/sqrt(0.5)
        p1, s1 = rmsprop_step(p, g, RmsState.zeros_like(p), cfg)
        d1 = 0.1 / np.sqrt(0.5)
        assert p1.weights[0][0, 0, 0, 0] == pytest.approx(-d1, rel=1e-9)
        # step 1: lr/(1+1) = 0.05, v = 0.75
        p2, _ = rmsprop_step(p1, g, s1, cfg)
        d2 = 0.05 / np.sqrt(0.75)
        assert p2.weights[0][0, 0, 0, 0] == pytest.approx(-(d1 + d2), rel=1e-9)

    def test_functional_purity(self):
        p = build_network(TINY, 4)
        before = [w.copy() for w in p.weights]
        g = zero_grads(p)
        g[0][0][:] = 1.0
        s = RmsState.zeros_like(p)
        rmsprop_step(p, g, s, TrainConfig())
        for w, w0 in zip(p.weights, before):
            np.testing.assert_array_equal(w, w0)
        assert s.step == 0
        assert np.all(s.v_weights[0] == 0.0)

    def test_non_finite_gradient_rejected(self):
        p = build_network(TINY, 5)
        g = zero_grads(p)
        g[0][0][0, 0, 0, 0] = np.inf
        with pytest.raises(TrainingDivergenceError):
            rmsprop_step(p, g, RmsState.zeros_like(p), TrainConfig())


def training_pair(dims=32):
    """One (corrupted, clean) normalized slice pair from the fixed phantom."""
    v = generate(standard_spec(), (dims, dims, dims))
    pose = RigidMotion(translation=(2.0, -1.0, 1.5), rotation=(2.0, -1.0, 1.0))
    t = MotionTrajectory(n_pe=dims, segments=(
        TrajectorySegment(0, RigidMotion()),
        TrajectorySegment(dims // 2 + 3, pose)))
    _, corrupted = corrupt(v, t)
    mask = estimate_foreground(v)
    clean_n, _ = normalize(v, mask)
    cor_n, _ = normalize(corrupted, mask)
    k = dims // 2
    return cor_n.data[:, :, k], clean_n.data[:, :, k]


class TestTrain:
    def test_empty_dataset_rejected(self):
        with pytest.raises(ValidationError):
            train([], TINY, TrainConfig(iterations=1))

    def test_mismatched_pair_shapes_rejected(self):
        a = np.zeros((8, 8))
        b = np.zeros((16, 16))
        with pytest.raises(ValidationError):
            train([(a, a), (b, b)], TINY, TrainConfig(iterations=1))

    def test_deterministic_per_seed(self):
        x, y = training_pair(16)
        cfg = NetworkConfig(levels=1, channels=(2,), convs_per_level=1)
        tc = TrainConfig(iterations=5, seed=3)
        p1, h1 = train([(x, y)], cfg, tc)
        p2, h2 = train([(x, y)], cfg, tc)
        assert h1 == h2
        for w1, w2 in zip(p1.weights, p2.weights):
            np.testing.assert_array_equal(w1, w2)
        _, h3 = train([(x, y)], cfg, TrainConfig(iterations=5, seed=4))
        assert h1 != h3

    def test_history_records_loss_before_each_step(self):
        x, y = training_pair(16)
        cfg = NetworkConfig(levels=1, channels=(2,), convs_per_level=1,
                            decoder_dropout=0.0)
        tc = TrainConfig(iterations=3, seed=11, batch_size=1)
        _, history = train([(x, y)], cfg, tc)
        assert len(history) == 3
        init_seed, _, _ = np.random.SeedSequence(11).spawn(3)
        p0 = build_network(cfg, init_seed)
        out, _, _ = forward(p0, x[None, None], mode="infer")
        assert history[0] == pytest.approx(mse_loss(out, y[None, None]), rel=1e-12)

    def test_batch_capped_at_dataset_size(self):
        x, y = training_pair(16)
        p, history = train([(x, y)], NetworkConfig(levels=1, channels=(2,)),
                           TrainConfig(iterations=2, batch_size=8, seed=0))
        assert len(history) == 2

    def test_divergent_loss_raises(self):
        x = np.full((8, 8), 1e200)
        with pytest.raises(TrainingDivergenceError):
            train([(x, x)], NetworkConfig(levels=1, channels=(2,), convs_per_level=1),
                  TrainConfig(iterations=2, seed=0))

    def test_overfits_a_single_pair(self):
        x, y = training_pair(32)
        params, history = train([(x, y)], NetworkConfig(),
                                TrainConfig(iterations=500, seed=1, batch_size=1))
        assert history[-1] < 0.05 * history[0]
        out, _, _ = forward(params, x[None, None], mode="infer")
        assert mse_loss(out, y[None, None]) < 0.05 * history[0]


class TestLossCsv:
    def test_round_trip(self, tmp_path):
        history = [1.5, 0.25, 0.0625000001]
        path = save_loss_csv(history, tmp_path / "loss.csv")
        assert load_loss_csv(path) == history
        text = path.read_text().splitlines()
        assert text[0] == "iteration,loss"
        assert text[1] == "0,1.5"


class TestWeightsIo:
    def test_round_trip_is_float32_exact(self, tmp_path):
        p = build_network(NetworkConfig(levels=2, channels=(4, 8)), 9)
        p.seed = 9
        save_weights(p, tmp_path / "weights")
        q = load_weights(tmp_path / "weights")
        assert q.config == p.config
        assert q.layout == p.layout
        assert q.seed == 9
        for w, w2 in zip(p.weights, q.weights):
            np.testing.assert_array_equal(w2, w.astype(np.float32).astype(np.float64))

    def test_manifest_contents(self, tmp_path):
        import json
        p = build_network(NetworkConfig(levels=1, channels=(2,)), 0)
        mpath, ppath = save_weights(p, tmp_path / "weights")
        doc = json.loads(mpath.read_text())
        assert doc["value_type"] == "float32 little-endian"
        assert doc["layers"][0]["id"] == "enc0c0"
        assert doc["layers"][0]["weight_shape"] == [2, 1, 3, 3]
        assert ppath.stat().st_size == doc["total_bytes"]

    def test_payload_size_mismatch_rejected(self, tmp_path):
        p = build_network(NetworkConfig(levels=1, channels=(2,)), 0)
        _, ppath = save_weights(p, tmp_path / "weights")
        ppath.write_bytes(ppath.read_bytes()[:-4])
        with pytest.raises(ValidationError):
            load_weights(tmp_path / "weights")
