"""Rigid-body motion, random trajectories, and k-space corruption.

A scan is modeled as acquiring one phase-encode line at a time while the
object sits still between a small number of sudden position changes.  Each
constant-pose stretch contributes the k-space lines acquired during it, so
the corrupted spectrum is a sum of masked spectra of rigidly transformed
copies of the object.  Equivalently, in the image domain, each transformed
copy is circularly convolved along the phase-encode axis with the inverse
DFT of its sampling mask; :func:`corrupt` implements the k-space route and
:func:`convolution_route` the literal convolution sum, and the two must
agree to FFT precision.

Sampling masks are plain 0/1 ``uint8`` arrays over phase-encode indices;
the masks of a trajectory always partition ``[0, n_pe)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, OracleLimitError, ValidationError
from .volume import KSpace, Volume, fft3_centered, ifft3_centered, magnitude

# convolution_route is O(n_pe * N); refuse grids beyond this per-axis extent
ORACLE_DIM_LIMIT = 16

_COORD_SNAP = 1e-9  # voxel units; treat near-integer sample coords as exact


@dataclass(frozen=True)
class RigidMotion:
    """A 6-parameter pose: translation in mm, rotation in degrees.

    Rotations are applied about the volume center, intrinsically about the
    x, then y, then z volume axes (composite ``R = Rx @ Ry @ Rz``).
    """

    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rotation: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        t = tuple(float(x) for x in self.translation)
        r = tuple(float(x) for x in self.rotation)
        if len(t) != 3 or len(r) != 3:
            raise ValidationError("translation and rotation must have three components")
        if not all(np.isfinite(t + r)):
            raise ValidationError("pose components must be finite")
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", r)

    @classmethod
    def identity(cls) -> "RigidMotion":
        return cls()

    @property
    def is_identity(self) -> bool:
        return all(x == 0.0 for x in self.translation + self.rotation)

    def matrix(self) -> np.ndarray:
        """3x3 rotation matrix for the intrinsic x-y-z angle convention."""
        rx, ry, rz = np.deg2rad(self.rotation)
        cx, sx = np.cos(rx), np.sin(rx)
        cy, sy = np.cos(ry), np.sin(ry)
        cz, sz = np.cos(rz), np.sin(rz)
        mx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
        my = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
        mz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
        return mx @ my @ mz


@dataclass(frozen=True)
class TrajectorySegment:
    start_index: int
    pose: RigidMotion


@dataclass(frozen=True)
class MotionTrajectory:
    """Piecewise-constant poses indexed by phase-encode line.

    Segment i covers lines ``[start_i, start_{i+1})`` (the last runs to
    ``n_pe``).  The first segment always starts at line 0 with the identity
    pose; trajectories from :func:`random_trajectory` carry at least one
    motion event beyond it.
    """

    segments: tuple[TrajectorySegment, ...]
    n_pe: int

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ValidationError("trajectory needs at least the initial segment")
        if segs[0].start_index != 0 or not segs[0].pose.is_identity:
            raise ValidationError("first segment must start at line 0 with the identity pose")
        starts = [s.start_index for s in segs]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValidationError(f"segment start indices must be strictly increasing: {starts}")
        if starts[-1] >= self.n_pe or self.n_pe < 1:
            raise ValidationError(f"start indices must lie in [0, n_pe={self.n_pe})")
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "n_pe", int(self.n_pe))

    @property
    def events(self) -> tuple[TrajectorySegment, ...]:
        """Segments after the initial rest period (the motion events)."""
        return self.segments[1:]


@dataclass(frozen=True)
class TrajectoryConfig:
    """Bounds and extent for random trajectory generation."""

    n_pe: int
    max_translation_mm: float = 5.0
    max_rotation_deg: float = 5.0
    n_events: int | None = None  # None: pick 1 or 2 with equal probability

    def __post_init__(self):
        if self.max_translation_mm <= 0 or self.max_rotation_deg <= 0:
            raise ValidationError("motion bounds must be positive")
        if self.n_events is not None and self.n_events < 1:
            raise ValidationError("n_events must be >= 1")


@dataclass(frozen=True)
class TrajectoryStats:
    mean_abs_translation: float
    mean_abs_rotation: float
    mean_center_distance: float


def apply_rigid(v: Volume, m: RigidMotion) -> Volume:
    """Resample a volume under a rigid transform (rotation about the center).

    The output voxel at physical position x takes the source value at
    ``R^-1 (x - t)``, trilinearly interpolated, zero outside the grid.
    The identity pose returns an exact copy; integer-voxel translations and
    quarter-turns on odd cubic grids are exact (sample coordinates within
    1e-9 of a voxel are snapped onto it).
    """
    if m.is_identity:
        return v.with_data(v.data)
    n = v.dims
    spacing = np.asarray(v.spacing)
    center = (np.asarray(n, dtype=np.float64) - 1.0) / 2.0
    idx = np.indices(n, dtype=np.float64).reshape(3, -1)
    mm = (idx - center[:, None]) * spacing[:, None]
    src_mm = m.matrix().T @ (mm - np.asarray(m.translation)[:, None])
    coords = src_mm / spacing[:, None] + center[:, None]
    out = _trilinear_sample(v.data, coords).reshape(n)
    return v.with_data(out)


def _trilinear_sample(data: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Trilinear interpolation at voxel coordinates (3, M), zero outside."""
    n = data.shape
    padded = np.zeros((n[0] + 2, n[1] + 2, n[2] + 2), dtype=data.dtype)
    padded[1:-1, 1:-1, 1:-1] = data

    snapped = np.rint(coords)
    coords = np.where(np.abs(coords - snapped) < _COORD_SNAP, snapped, coords)
    # clamp to [-1, n]: everything further out interpolates among zero padding
    lo = -1.0
    hi = np.asarray(n, dtype=np.float64)[:, None]
    coords = np.clip(coords, lo, hi)

    i0 = np.floor(coords).astype(np.int64)
    # a coordinate exactly at n floors to n; pull it back so i0+1 stays in
    # the padding (its full weight then falls on the zero layer)
    i0 = np.minimum(i0, np.asarray(n, dtype=np.int64)[:, None] - 1)
    w = coords - i0
    i0 += 1  # shift into padded frame

    vals = np.zeros(coords.shape[1], dtype=data.dtype)
    for dx in (0, 1):
        wx = (1.0 - w[0]) if dx == 0 else w[0]
        for dy in (0, 1):
            wy = (1.0 - w[1]) if dy == 0 else w[1]
            for dz in (0, 1):
                wz = (1.0 - w[2]) if dz == 0 else w[2]
                weight = wx * wy * wz
                vals += weight * padded[i0[0] + dx, i0[1] + dy, i0[2] + dz]
    return vals


def segment_masks(t: MotionTrajectory) -> list[np.ndarray]:
    """One 0/1 indicator per segment; together they partition [0, n_pe)."""
    starts = [s.start_index for s in t.segments] + [t.n_pe]
    masks = []
    for a, b in zip(starts, starts[1:]):
        mask = np.zeros(t.n_pe, dtype=np.uint8)
        mask[a:b] = 1
        masks.append(mask)
    return masks


def mask_kernel(mask: np.ndarray) -> np.ndarray:
    """Inverse centered 1D DFT of a sampling mask: the convolution kernel.

    The zero-shift tap sits at the center index ``n//2``; the kernels of a
    partition of [0, n) sum to the discrete delta there.
    """
    mask = np.asarray(mask)
    if mask.ndim != 1 or mask.size < 1:
        raise ValidationError("mask must be a non-empty 1D array")
    return np.fft.fftshift(np.fft.ifft(np.fft.ifftshift(mask.astype(np.float64))))


def corrupt(v: Volume, t: MotionTrajectory) -> tuple[KSpace, Volume]:
    """Motion-corrupt a volume through the segmented k-space route.

    Each segment contributes the phase-encode lines of its mask taken from
    the spectrum of the correspondingly transformed volume.  Returns the
    combined k-space and the magnitude of its inverse transform.
    """
    pe = v.pe_axis
    if t.n_pe != v.dims[pe]:
        raise DimensionError(
            f"trajectory covers {t.n_pe} phase-encode lines, volume has {v.dims[pe]}"
        )
    acc = np.zeros(v.dims, dtype=np.complex128)
    acc_pe_first = np.moveaxis(acc, pe, 0)
    for seg, mask in zip(t.segments, segment_masks(t)):
        moved = v if seg.pose.is_identity else apply_rigid(v, seg.pose)
        spec = fft3_centered(moved).data
        lines = np.nonzero(mask)[0]
        acc_pe_first[lines] = np.moveaxis(spec, pe, 0)[lines]
    kspace = KSpace(acc, axis_labels=v.axis_labels)
    return kspace, magnitude(ifft3_centered(kspace), like=v)


def convolution_route(v: Volume, t: MotionTrajectory) -> Volume:
    """Literal convolution-model evaluation, the oracle for :func:`corrupt`.

    Sums, over segments, the transformed volume circularly convolved along
    the phase-encode axis with :func:`mask_kernel` of the segment's mask,
    by direct summation (no fast transform).  Refuses grids larger than
    ``ORACLE_DIM_LIMIT`` per axis.
    """
    if max(v.dims) > ORACLE_DIM_LIMIT:
        raise OracleLimitError(
            f"convolution route is quadratic in n_pe; dims {v.dims} exceed "
            f"the {ORACLE_DIM_LIMIT} per-axis limit"
        )
    pe = v.pe_axis
    if t.n_pe != v.dims[pe]:
        raise DimensionError(
            f"trajectory covers {t.n_pe} phase-encode lines, volume has {v.dims[pe]}"
        )
    n = t.n_pe
    c = n // 2
    i = np.arange(n)
    acc = np.zeros((n,) + tuple(d for a, d in enumerate(v.dims) if a != pe),
                   dtype=np.complex128)
    for seg, mask in zip(t.segments, segment_masks(t)):
        moved = v if seg.pose.is_identity else apply_rigid(v, seg.pose)
        kernel = mask_kernel(mask)
        # conv[i] = sum_j moved[j] * kernel[(i - j + c) mod n], zero tap at c
        weights = kernel[(i[:, None] - i[None, :] + c) % n]
        acc += np.einsum("ij,j...->i...", weights, np.moveaxis(moved.data, pe, 0))
    return v.with_data(np.abs(np.moveaxis(acc, 0, pe)))


def random_trajectory(rng_seed, config: TrajectoryConfig) -> MotionTrajectory:
    """Draw a trajectory with 1 or 2 sudden moves at random line indices.

    Event lines are distinct uniform draws from [1, n_pe); each pose
    component is uniform within its bound.  Deterministic per seed.
    """
    if config.n_pe < 4:
        raise ValidationError(f"n_pe must be at least 4, got {config.n_pe}")
    rng = np.random.default_rng(rng_seed)
    n_events = config.n_events
    if n_events is None:
        n_events = int(rng.integers(1, 3))
    if n_events >= config.n_pe - 1:
        raise ValidationError(f"cannot place {n_events} events in [1, {config.n_pe})")
    starts = np.sort(rng.choice(np.arange(1, config.n_pe), size=n_events, replace=False))
    segments = [TrajectorySegment(0, RigidMotion.identity())]
    for start in starts:
        translation = tuple(rng.uniform(-config.max_translation_mm,
                                        config.max_translation_mm, 3))
        rotation = tuple(rng.uniform(-config.max_rotation_deg,
                                     config.max_rotation_deg, 3))
        segments.append(TrajectorySegment(int(start), RigidMotion(translation, rotation)))
    return MotionTrajectory(tuple(segments), config.n_pe)


def trajectory_stats(t: MotionTrajectory) -> TrajectoryStats:
    """Mean absolute pose magnitudes and mean line distance from the k-space
    center, taken over the motion events."""
    events = t.events
    if not events:
        return TrajectoryStats(0.0, 0.0, 0.0)
    trans = np.array([e.pose.translation for e in events])
    rots = np.array([e.pose.rotation for e in events])
    center = t.n_pe // 2
    dists = np.array([abs(e.start_index - center) for e in events], dtype=np.float64)
    return TrajectoryStats(
        mean_abs_translation=float(np.mean(np.abs(trans))),
        mean_abs_rotation=float(np.mean(np.abs(rots))),
        mean_center_distance=float(np.mean(dists)),
    )


def error_band_shares(clean: Volume, corrupted_k: KSpace) -> tuple[float, float]:
    """Split the corruption-inconsistency energy into low/high pe bands.

    The corrupted spectrum is compared against the clean volume's spectrum
    (the magnitude image would rectify ringing into the low band, so the
    comparison stays complex) and the squared error is summed per
    phase-encode line; the low band is centered distance <= n_pe/4.
    Returns (low_share, high_share), which sum to 1 for nonzero error.
    """
    if corrupted_k.data.shape != clean.dims:
        raise DimensionError(
            f"k-space shape {corrupted_k.data.shape} does not match "
            f"volume dims {clean.dims}")
    err = corrupted_k.data - fft3_centered(clean).data
    pe = clean.pe_axis
    power = np.abs(np.moveaxis(err, pe, 0)) ** 2
    per_line = power.reshape(power.shape[0], -1).sum(axis=1)
    n = per_line.size
    dist = np.abs(np.arange(n) - n // 2)
    total = per_line.sum()
    if total == 0:
        return 0.0, 0.0
    low = per_line[dist <= n / 4.0].sum() / total
    return float(low), float(1.0 - low)


# ---------------------------------------------------------------------------
# trajectory manifest (JSON): enough to regenerate a corruption bit-exactly


def save_trajectory(t: MotionTrajectory, path: str | Path,
                    axis_label: str = "pe", seed=None, bounds=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "n_pe": t.n_pe,
        "axis_label": axis_label,
        "segments": [
            {
                "start_index": s.start_index,
                "tx": s.pose.translation[0],
                "ty": s.pose.translation[1],
                "tz": s.pose.translation[2],
                "rx": s.pose.rotation[0],
                "ry": s.pose.rotation[1],
                "rz": s.pose.rotation[2],
            }
            for s in t.segments
        ],
        "seed": seed,
        "bounds": bounds,
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")
    return path


def load_trajectory(path: str | Path) -> MotionTrajectory:
    doc = json.loads(Path(path).read_text())
    segments = tuple(
        TrajectorySegment(
            int(s["start_index"]),
            RigidMotion((s["tx"], s["ty"], s["tz"]), (s["rx"], s["ry"], s["rz"])),
        )
        for s in doc["segments"]
    )
    return MotionTrajectory(segments, int(doc["n_pe"]))
