"""The encoder-decoder network: configuration, initialization, forward,
exact manual backward.

Each encoder level applies three same-padded 3x3 convolutions with
rectifier activations, saves its activation as a skip tensor, then halves
the spatial dims with 2x2 max pooling.  Each decoder level doubles the
dims with nearest-neighbor upsampling, concatenates the mirrored skip
tensor on the channel axis (upsampled channels first), and applies three
conv+rectifier blocks, each followed by inverted dropout in train mode.
A final 3x3 convolution maps back to one channel with no activation and
no dropout, so output dims always equal input dims.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError, ValidationError
from ..volume import Image2D
from . import layers


@dataclass(frozen=True)
class NetworkConfig:
    levels: int = 3
    channels: tuple[int, ...] = (16, 32, 64)
    convs_per_level: int = 3
    skip_connections: bool = True
    decoder_dropout: float = 0.2

    def __post_init__(self):
        if self.levels < 1:
            raise ValidationError(f"levels must be >= 1, got {self.levels}")
        ch = tuple(int(c) for c in self.channels)
        if len(ch) != self.levels or any(c < 1 for c in ch):
            raise ValidationError(
                f"channels must list {self.levels} positive widths, got {self.channels}")
        if self.convs_per_level < 1:
            raise ValidationError("convs_per_level must be >= 1")
        if not (0.0 <= self.decoder_dropout < 1.0):
            raise ValidationError(f"dropout must be in [0, 1), got {self.decoder_dropout}")
        object.__setattr__(self, "channels", ch)

    def layer_plan(self) -> list[tuple[str, int, int]]:
        """Ordered (layer id, in_channels, out_channels) for every conv."""
        plan = []
        ch = self.channels
        for i in range(self.levels):
            for j in range(self.convs_per_level):
                cin = ch[i] if j > 0 else (1 if i == 0 else ch[i - 1])
                plan.append((f"enc{i}c{j}", cin, ch[i]))
        for i in reversed(range(self.levels)):
            below = ch[i] if i == self.levels - 1 else ch[i + 1]
            for j in range(self.convs_per_level):
                if j > 0:
                    cin = ch[i]
                else:
                    cin = below + (ch[i] if self.skip_connections else 0)
                plan.append((f"dec{i}c{j}", cin, ch[i]))
        plan.append(("out", ch[0], 1))
        return plan


@dataclass
class NetworkParameters:
    """Ordered conv parameter blocks plus the layout naming each block."""

    config: NetworkConfig
    weights: list  # of (out_ch, in_ch, 3, 3) float64 arrays
    biases: list   # of (out_ch,) float64 arrays
    layout: tuple[str, ...]
    seed: int | None = None

    def __post_init__(self):
        plan = self.config.layer_plan()
        if tuple(lid for lid, _, _ in plan) != tuple(self.layout):
            raise ValidationError("layout does not match the config's layer plan")
        for (lid, cin, cout), w, b in zip(plan, self.weights, self.biases):
            if w.shape != (cout, cin, 3, 3) or b.shape != (cout,):
                raise ValidationError(f"block {lid}: bad shapes {w.shape}, {b.shape}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValidationError(f"block {lid}: non-finite parameters")

    def index(self, layer_id: str) -> int:
        return self.layout.index(layer_id)


def build_network(cfg: NetworkConfig, rng_seed) -> NetworkParameters:
    """Initialize parameters: fan-in-scaled uniform weights, zero biases."""
    rng = np.random.default_rng(rng_seed)
    weights, biases, layout = [], [], []
    for lid, cin, cout in cfg.layer_plan():
        fan_in = cin * 9
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, (cout, cin, 3, 3)))
        biases.append(np.zeros(cout))
        layout.append(lid)
    seed = rng_seed if isinstance(rng_seed, (int, np.integer)) else None
    return NetworkParameters(cfg, weights, biases, tuple(layout),
                             seed=None if seed is None else int(seed))


def _as_batch(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise DimensionError(f"expected a (batch, channels, h, w) tensor, got shape {x.shape}")
    return x


def forward(p: NetworkParameters, x, mode: str = "infer", rng=None, taps=()):
    """Run the network; returns (output, cache, tapped activations).

    mode "train" applies dropout after each decoder activation using `rng`
    and caches everything :func:`backward` needs; "infer" is deterministic.
    `taps` names conv layer ids whose post-activation maps are wanted.
    """
    if mode not in ("train", "infer"):
        raise ValidationError(f"mode must be 'train' or 'infer', got {mode!r}")
    if mode == "train" and rng is None and p.config.decoder_dropout > 0:
        raise ValidationError("train mode needs an rng for dropout")
    x = _as_batch(x)
    cfg = p.config
    h, w = x.shape[2], x.shape[3]
    if x.shape[1] != 1:
        raise DimensionError(f"network expects 1 input channel, got {x.shape[1]}")
    stride = 2 ** cfg.levels
    if h % stride or w % stride:
        raise DimensionError(
            f"input {h}x{w} must be divisible by 2^levels = {stride} for pooling")

    tapped = {}
    drop_p = cfg.decoder_dropout if mode == "train" else 0.0
    block = 0
    enc_cache, skips = [], []
    for i in range(cfg.levels):
        convs = []
        for j in range(cfg.convs_per_level):
            x_in = x
            pre = layers.conv3_forward(x_in, p.weights[block], p.biases[block])
            x, mask = layers.relu_forward(pre)
            convs.append((x_in, mask))
            if p.layout[block] in taps:
                tapped[p.layout[block]] = x.copy()
            block += 1
        skips.append(x)
        x, pool = layers.maxpool2_forward(x)
        enc_cache.append({"convs": convs, "pool": pool})

    dec_cache = []
    for i in reversed(range(cfg.levels)):
        up_in_shape = x.shape
        x = layers.upsample2_forward(x)
        split = x.shape[1]
        if cfg.skip_connections:
            x = np.concatenate([x, skips[i]], axis=1)
        convs = []
        for j in range(cfg.convs_per_level):
            x_in = x
            pre = layers.conv3_forward(x_in, p.weights[block], p.biases[block])
            x, mask = layers.relu_forward(pre)
            if p.layout[block] in taps:
                tapped[p.layout[block]] = x.copy()
            x, drop = layers.dropout_forward(x, drop_p, rng)
            convs.append((x_in, mask, drop))
            block += 1
        dec_cache.append({"level": i, "up_in_shape": up_in_shape,
                          "split": split, "convs": convs})

    final_in = x
    out = layers.conv3_forward(final_in, p.weights[block], p.biases[block])
    if p.layout[block] in taps:
        tapped[p.layout[block]] = out.copy()

    cache = {"params": p, "mode": mode, "drop_p": drop_p, "out": out,
             "enc": enc_cache, "dec": dec_cache, "final_in": final_in}
    return out, cache, tapped


def mse_loss(out, target) -> float:
    """Mean over all elements of the squared difference."""
    out = np.asarray(out, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if out.shape != target.shape:
        raise DimensionError(f"shape mismatch: {out.shape} vs {target.shape}")
    diff = out - target
    return float(np.mean(diff * diff))


def backward(cache, target):
    """Exact gradients of mse_loss(forward(...), target) for every block.

    Walks the forward tape in reverse, reusing the cached dropout masks and
    pooling argmaxes.  Returns (dweights, dbiases) lists in layout order.
    """
    p: NetworkParameters = cache["params"]
    cfg = p.config
    out = cache["out"]
    target = np.asarray(target, dtype=np.float64)
    if target.shape != out.shape:
        raise DimensionError(f"target shape {target.shape} does not match output {out.shape}")

    dweights = [None] * len(p.weights)
    dbiases = [None] * len(p.biases)
    block = len(p.weights) - 1
    drop_p = cache["drop_p"]

    g = (2.0 / out.size) * (out - target)
    g, dweights[block], dbiases[block] = layers.conv3_backward(
        g, cache["final_in"], p.weights[block])
    block -= 1

    # dec_cache holds levels deepest-first (forward order); walk it reversed
    skip_grads = {}
    for entry in reversed(cache["dec"]):
        for x_in, mask, drop in reversed(entry["convs"]):
            g = layers.dropout_backward(g, drop, drop_p)
            g = layers.relu_backward(g, mask)
            g, dweights[block], dbiases[block] = layers.conv3_backward(
                g, x_in, p.weights[block])
            block -= 1
        split = entry["split"]
        if cfg.skip_connections:
            skip_grads[entry["level"]] = g[:, split:]
            g = g[:, :split]
        g = layers.upsample2_backward(g)

    for i in reversed(range(cfg.levels)):
        entry = cache["enc"][i]
        g = layers.maxpool2_backward(g, entry["pool"])
        if cfg.skip_connections:
            g = g + skip_grads[i]
        for x_in, mask in reversed(entry["convs"]):
            g = layers.relu_backward(g, mask)
            g, dweights[block], dbiases[block] = layers.conv3_backward(
                g, x_in, p.weights[block])
            block -= 1

    return dweights, dbiases


def correct(p: NetworkParameters, img: Image2D) -> Image2D:
    """Infer-mode forward on a single image as a batch of one."""
    x = img.data[None, None, :, :]
    out, _, _ = forward(p, x, mode="infer")
    return Image2D(out[0, 0], provenance=img.provenance)
