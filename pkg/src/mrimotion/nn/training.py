"""RMSprop training loop over (corrupted, clean) slice pairs.

The optimizer keeps one squared-gradient accumulator per parameter block:

    v <- rho * v + (1 - rho) * g^2
    p <- p - lr_t * g / (sqrt(v) + epsilon),   lr_t = lr / (1 + decay * t)

with t counting completed steps, so decay = 0 keeps the rate constant.
Batches are drawn from a seeded shuffle that reshuffles whenever fewer
than a full batch remains (partial batches are never used); the loss of
every iteration is recorded before the step.  Everything about a run is
a pure function of (dataset, configs, seed).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import TrainingDivergenceError, ValidationError
from .model import NetworkConfig, NetworkParameters, backward, build_network, forward, mse_loss


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    rho: float = 0.9
    decay: float = 0.0
    epsilon: float = 1e-8
    batch_size: int = 4
    iterations: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if not (0.0 < self.rho < 1.0):
            raise ValidationError(f"rho must be in (0, 1), got {self.rho}")
        if self.decay < 0 or self.epsilon <= 0:
            raise ValidationError("decay must be >= 0 and epsilon > 0")
        if self.batch_size < 1 or self.iterations < 1:
            raise ValidationError("batch_size and iterations must be >= 1")


@dataclass
class RmsState:
    """Squared-gradient accumulators matching a parameter set, plus the
    completed-step count used by the decay schedule."""

    v_weights: list
    v_biases: list
    step: int = 0

    @classmethod
    def zeros_like(cls, p: NetworkParameters) -> "RmsState":
        return cls([np.zeros_like(w) for w in p.weights],
                   [np.zeros_like(b) for b in p.biases], step=0)


def rmsprop_step(p: NetworkParameters, grads, s: RmsState,
                 cfg: TrainConfig) -> tuple[NetworkParameters, RmsState]:
    """One optimizer step; returns fresh parameter and state objects."""
    dweights, dbiases = grads
    for g in dweights + dbiases:
        if not np.isfinite(g).all():
            raise TrainingDivergenceError("non-finite gradient in optimizer step")
    lr = cfg.learning_rate / (1.0 + cfg.decay * s.step)
    new_w, new_b, new_vw, new_vb = [], [], [], []
    for w, g, v in zip(p.weights, dweights, s.v_weights):
        v2 = cfg.rho * v + (1.0 - cfg.rho) * g * g
        new_vw.append(v2)
        new_w.append(w - lr * g / (np.sqrt(v2) + cfg.epsilon))
    for b, g, v in zip(p.biases, dbiases, s.v_biases):
        v2 = cfg.rho * v + (1.0 - cfg.rho) * g * g
        new_vb.append(v2)
        new_b.append(b - lr * g / (np.sqrt(v2) + cfg.epsilon))
    p2 = NetworkParameters(p.config, new_w, new_b, p.layout, seed=p.seed)
    return p2, RmsState(new_vw, new_vb, step=s.step + 1)


def _stack_pairs(dataset):
    """Stack (corrupted, clean) pairs into (N, 1, H, W) batches."""
    if len(dataset) == 0:
        raise ValidationError("dataset is empty")
    xs, ys = [], []
    for pair in dataset:
        cor, ref = pair
        cor = np.asarray(getattr(cor, "data", cor), dtype=np.float64)
        ref = np.asarray(getattr(ref, "data", ref), dtype=np.float64)
        if cor.ndim != 2 or cor.shape != ref.shape:
            raise ValidationError(
                f"pairs must be matching 2D images, got {cor.shape} vs {ref.shape}")
        xs.append(cor)
        ys.append(ref)
    shapes = {x.shape for x in xs}
    if len(shapes) != 1:
        raise ValidationError(f"all pairs must share one shape, got {sorted(shapes)}")
    return np.stack(xs)[:, None], np.stack(ys)[:, None]


def train(dataset, net_cfg: NetworkConfig, train_cfg: TrainConfig):
    """Train from scratch; returns (parameters, per-iteration loss history)."""
    x_all, y_all = _stack_pairs(dataset)
    n = x_all.shape[0]
    batch = min(train_cfg.batch_size, n)

    init_seed, shuffle_seed, drop_seed = np.random.SeedSequence(train_cfg.seed).spawn(3)
    params = build_network(net_cfg, init_seed)
    params.seed = train_cfg.seed
    shuffle_rng = np.random.default_rng(shuffle_seed)
    drop_rng = np.random.default_rng(drop_seed)
    state = RmsState.zeros_like(params)

    order = shuffle_rng.permutation(n)
    cursor = 0
    history = []
    for it in range(train_cfg.iterations):
        if cursor + batch > n:
            order = shuffle_rng.permutation(n)
            cursor = 0
        idx = order[cursor:cursor + batch]
        cursor += batch

        out, cache, _ = forward(params, x_all[idx], mode="train", rng=drop_rng)
        loss = mse_loss(out, y_all[idx])
        if not np.isfinite(loss):
            raise TrainingDivergenceError(f"loss became non-finite at iteration {it}")
        history.append(loss)
        grads = backward(cache, y_all[idx])
        params, state = rmsprop_step(params, grads, state, train_cfg)
    return params, history


def save_loss_csv(history, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["iteration,loss"]
    lines += [f"{i},{repr(float(loss))}" for i, loss in enumerate(history)]
    path.write_text("\n".join(lines) + "\n")
    return path


def load_loss_csv(path) -> list[float]:
    lines = Path(path).read_text().strip().splitlines()
    return [float(line.split(",")[1]) for line in lines[1:]]
