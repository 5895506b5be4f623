"""Core 3D grid types and centered Fourier transforms.

A :class:`Volume` is a real-valued intensity grid; its Fourier counterpart
:class:`KSpace` stores the complex spectrum with the DC component at the
center index ``(nx//2, ny//2, nz//2)``.  The flat memory layout is C order,
so the first axis varies slowest; by convention the phase-encode axis is
axis 0 (label ``"pe"``), matching the slowest acquisition loop.

Transform conventions
---------------------
The forward transform is unnormalized and the inverse carries the full
``1/N`` factor, so masking algebra in k-space needs no scale bookkeeping.
Both transforms are centered in both domains::

    K[k] = sum_x v[x] * exp(-2j*pi * sum_a (x_a - c_a) * (k_a - c_a) / n_a)

with ``c_a = n_a // 2`` (odd extents supported).  This equals
``fftshift(fftn(ifftshift(v)))``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BoundsError, DimensionError, ValidationError

PE_LABEL = "pe"
DEFAULT_AXIS_LABELS = ("pe", "ro", "sl")


def _frozen_array(a, dtype):
    out = np.array(a, dtype=dtype, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Volume:
    """Real 3D intensity grid with voxel spacing in mm.

    ``axis_labels`` gives each axis a semantic name; exactly one axis must
    carry the phase-encode label ``"pe"``.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    axis_labels: tuple[str, str, str] = DEFAULT_AXIS_LABELS
    name: str = ""

    def __post_init__(self):
        data = _frozen_array(self.data, np.float64)
        if data.ndim != 3:
            raise DimensionError(f"volume data must be 3D, got shape {data.shape}")
        if not np.isfinite(data).all():
            raise ValidationError("volume data contains non-finite values")
        object.__setattr__(self, "data", data)
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or any(s <= 0 for s in spacing):
            raise ValidationError(f"spacing must be three positive values, got {self.spacing}")
        object.__setattr__(self, "spacing", spacing)
        labels = tuple(str(l) for l in self.axis_labels)
        if len(labels) != 3 or labels.count(PE_LABEL) != 1:
            raise ValidationError(
                f"axis_labels must name exactly one axis {PE_LABEL!r}, got {labels}"
            )
        object.__setattr__(self, "axis_labels", labels)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def pe_axis(self) -> int:
        """Index of the phase-encode axis."""
        return self.axis_labels.index(PE_LABEL)

    def with_data(self, data: np.ndarray, name: str | None = None) -> "Volume":
        """Same geometry, new voxel values."""
        return Volume(data, self.spacing, self.axis_labels,
                      self.name if name is None else name)


@dataclass(frozen=True)
class KSpace:
    """Complex 3D spectrum, DC stored at the center index (centered=True)."""

    data: np.ndarray
    centered: bool = True
    axis_labels: tuple[str, str, str] = DEFAULT_AXIS_LABELS

    def __post_init__(self):
        data = _frozen_array(self.data, np.complex128)
        if data.ndim != 3:
            raise DimensionError(f"k-space data must be 3D, got shape {data.shape}")
        if not np.isfinite(data).all():
            raise ValidationError("k-space data contains non-finite values")
        object.__setattr__(self, "data", data)
        if not self.centered:
            raise ValidationError("only the centered-DC convention is supported")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def pe_axis(self) -> int:
        return self.axis_labels.index(PE_LABEL)


@dataclass(frozen=True)
class Image2D:
    """A 2D cross-section with provenance (volume id, axis, slice index)."""

    data: np.ndarray
    provenance: tuple[str, int, int] = ("", -1, -1)

    def __post_init__(self):
        data = _frozen_array(self.data, np.float64)
        if data.ndim != 2:
            raise DimensionError(f"image data must be 2D, got shape {data.shape}")
        if not np.isfinite(data).all():
            raise ValidationError("image data contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def dims(self) -> tuple[int, int]:
        return self.data.shape


def fft3_centered(v: Volume) -> KSpace:
    """Unnormalized forward 3D DFT with DC shifted to the center index."""
    spec = np.fft.fftshift(np.fft.fftn(np.fft.ifftshift(v.data)))
    return KSpace(spec, axis_labels=v.axis_labels)


def ifft3_centered(k: KSpace) -> np.ndarray:
    """Exact inverse of :func:`fft3_centered` (carries the 1/N factor).

    Returns the complex grid; take :func:`magnitude` for display or training.
    """
    return np.fft.fftshift(np.fft.ifftn(np.fft.ifftshift(k.data)))


def magnitude(grid: np.ndarray, like: Volume | None = None) -> Volume:
    """Element-wise modulus of a complex grid, packaged as a Volume.

    ``like`` supplies spacing and axis labels; defaults are used otherwise.
    """
    mag = np.abs(np.asarray(grid))
    if like is not None:
        return like.with_data(mag)
    return Volume(mag)


def extract_slice(v: Volume, axis: int, index: int) -> Image2D:
    """The 2D cross-section of ``v`` at ``index`` along ``axis``."""
    if axis not in (0, 1, 2):
        raise BoundsError(f"axis must be 0, 1 or 2, got {axis}")
    extent = v.dims[axis]
    if not 0 <= index < extent:
        raise BoundsError(
            f"slice index {index} out of range for axis {axis} "
            f"({v.axis_labels[axis]!r}, extent {extent})"
        )
    plane = np.take(v.data, index, axis=axis)
    return Image2D(plane, provenance=(v.name, axis, index))


# ---------------------------------------------------------------------------
# file formats: raw volume (JSON sidecar + float32 LE payload), 16-bit PGM

_VOLUME_DTYPE = "<f4"


def save_volume(v: Volume, basepath: str | Path) -> Path:
    """Write ``basepath.json`` (header) and ``basepath.raw`` (payload).

    The payload is exactly nx*ny*nz little-endian float32 values in C order.
    Returns the header path.
    """
    base = Path(basepath)
    base.parent.mkdir(parents=True, exist_ok=True)
    raw = base.with_suffix(".raw")
    header = {
        "dims": list(v.dims),
        "spacing": list(v.spacing),
        "axis_labels": list(v.axis_labels),
        "index_order": "C (first axis slowest)",
        "value_type": "float32 little-endian",
        "data_file": raw.name,
        "name": v.name,
    }
    raw.write_bytes(np.ascontiguousarray(v.data, dtype=_VOLUME_DTYPE).tobytes())
    hdr = base.with_suffix(".json")
    hdr.write_text(json.dumps(header, indent=2) + "\n")
    return hdr


def load_volume(basepath: str | Path) -> Volume:
    """Read a volume written by :func:`save_volume`."""
    base = Path(basepath)
    hdr_path = base if base.suffix == ".json" else base.with_suffix(".json")
    if not hdr_path.exists():
        raise ValidationError(f"volume header not found: {hdr_path}")
    header = json.loads(hdr_path.read_text())
    dims = tuple(int(d) for d in header["dims"])
    raw_path = hdr_path.parent / header["data_file"]
    payload = np.frombuffer(raw_path.read_bytes(), dtype=_VOLUME_DTYPE)
    expected = dims[0] * dims[1] * dims[2]
    if payload.size != expected:
        raise DimensionError(
            f"{raw_path} holds {payload.size} values, header says {expected}"
        )
    return Volume(
        payload.astype(np.float64).reshape(dims),
        spacing=tuple(header["spacing"]),
        axis_labels=tuple(header["axis_labels"]),
        name=header.get("name", ""),
    )


def write_pgm16(img: Image2D, path: str | Path) -> Path:
    """Export a slice as 16-bit grayscale PGM (maxval 65535, big-endian).

    Intensities are rescaled linearly from [min, max] to [0, 65535]; the
    rescale is recorded in a JSON sidecar next to the image.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = img.data
    lo, hi = float(data.min()), float(data.max())
    if hi > lo:
        scaled = np.round((data - lo) / (hi - lo) * 65535.0)
    else:
        scaled = np.zeros_like(data)
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        f.write(scaled.astype(">u2").tobytes())
    sidecar = {
        "min": lo,
        "max": hi,
        "maxval": 65535,
        "mapping": "round((value - min) / (max - min) * 65535)",
        "provenance": list(img.provenance),
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")
    return path
