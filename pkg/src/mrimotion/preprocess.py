"""Foreground estimation and the normalization contract around the network.

The foreground is found by thresholding at a fraction of the 99th
percentile (robust to hot pixels) followed by binary dilation then erosion
with a full 3x3x3 neighborhood.  Foreground voxels are affinely mapped to
mean 0.5 and standard deviation 1/6; the background is set exactly to
zero, and the affine record allows exact inversion after correction.

Statistics are computed over the foreground only: the background is
zeroed anyway, so including it would couple the statistics to object size.
Standard deviations are population (ddof=0) throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateInputError, DimensionError, ValidationError
from .volume import Volume, _frozen_array

TARGET_MEAN = 0.5
TARGET_STD = 1.0 / 6.0


@dataclass(frozen=True)
class ForegroundConfig:
    fraction: float = 0.1  # of the 99th-percentile intensity
    iterations: int = 2    # dilation passes, then erosion passes

    def __post_init__(self):
        if not (0.0 < self.fraction < 1.0):
            raise ValidationError(f"fraction must be in (0, 1), got {self.fraction}")
        if self.iterations < 0:
            raise ValidationError(f"iterations must be >= 0, got {self.iterations}")


@dataclass(frozen=True)
class ForegroundMask:
    """Binary grid matching a volume's dims, 1 on foreground."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise DimensionError(f"mask must be 3D, got shape {arr.shape}")
        if not np.isin(arr, (0, 1)).all():
            raise ValidationError("mask values must be 0 or 1")
        object.__setattr__(self, "data", _frozen_array(arr, np.uint8))

    @property
    def dims(self):
        return self.data.shape

    @property
    def bool_array(self) -> np.ndarray:
        return self.data.astype(bool)

    @property
    def count(self) -> int:
        return int(self.data.sum())


@dataclass(frozen=True)
class NormalizationRecord:
    """Original foreground statistics; targets are fixed by the contract."""

    original_mean: float
    original_std: float
    target_mean: float = TARGET_MEAN
    target_std: float = TARGET_STD

    def __post_init__(self):
        if not (self.original_std > 0 and np.isfinite(self.original_std)):
            raise ValidationError(f"original_std must be positive, got {self.original_std}")
        if not np.isfinite(self.original_mean):
            raise ValidationError("original_mean must be finite")

    def as_dict(self) -> dict:
        return {
            "original_mean": self.original_mean,
            "original_std": self.original_std,
            "target_mean": self.target_mean,
            "target_std": self.target_std,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NormalizationRecord":
        return cls(doc["original_mean"], doc["original_std"],
                   doc.get("target_mean", TARGET_MEAN), doc.get("target_std", TARGET_STD))


def estimate_foreground(v: Volume, cfg: ForegroundConfig = ForegroundConfig()) -> ForegroundMask:
    """Threshold at cfg.fraction x 99th percentile, then dilate and erode
    cfg.iterations times each with a full 3x3x3 structuring element."""
    data = v.data
    if data.max() == data.min():
        raise DegenerateInputError("volume has no dynamic range; cannot threshold")
    threshold = cfg.fraction * np.percentile(data, 99)
    mask = data > threshold
    if cfg.iterations > 0:
        structure = np.ones((3, 3, 3), dtype=bool)
        mask = ndimage.binary_dilation(mask, structure, iterations=cfg.iterations)
        mask = ndimage.binary_erosion(mask, structure, iterations=cfg.iterations)
    return ForegroundMask(mask.astype(np.uint8))


def normalize(v: Volume, m: ForegroundMask) -> tuple[Volume, NormalizationRecord]:
    """Affinely map foreground voxels to mean 0.5, std 1/6; zero background."""
    if m.dims != v.dims:
        raise DimensionError(f"mask dims {m.dims} do not match volume dims {v.dims}")
    fg = m.bool_array
    vals = v.data[fg]
    if vals.size == 0:
        raise DegenerateInputError("empty foreground; nothing to normalize")
    mu = float(vals.mean())
    sd = float(vals.std())
    if sd == 0.0:
        raise DegenerateInputError("foreground has zero variance")
    out = np.zeros(v.dims)
    out[fg] = (vals - mu) / sd * TARGET_STD + TARGET_MEAN
    return v.with_data(out), NormalizationRecord(mu, sd)


def denormalize(v: Volume, r: NormalizationRecord, m: ForegroundMask) -> Volume:
    """Inverse affine map on foreground; background stays 0."""
    if m.dims != v.dims:
        raise DimensionError(f"mask dims {m.dims} do not match volume dims {v.dims}")
    fg = m.bool_array
    out = np.zeros(v.dims)
    out[fg] = (v.data[fg] - r.target_mean) / r.target_std * r.original_std + r.original_mean
    return v.with_data(out)
