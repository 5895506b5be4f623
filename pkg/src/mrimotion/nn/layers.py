"""Layer primitives: forward and exact backward passes on (B, C, H, W).

Convolutions are 3x3, stride 1, zero padding 1, lowered to a single matrix
multiply per layer (im2col).  Backward passes recompute the column matrix
from the cached layer input instead of keeping it, trading a little compute
for a much smaller training footprint.  Everything runs in float64.
"""

from __future__ import annotations

import numpy as np


def im2col3(x: np.ndarray) -> np.ndarray:
    """Lower (B, C, H, W) to columns (C*9, B*H*W) for a same-padded 3x3 conv.

    Row c*9 + ki*3 + kj holds channel c shifted by kernel offset (ki, kj),
    matching the flattening of a (O, C, 3, 3) weight block.
    """
    b, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = np.empty((c, 3, 3, b, h, w))
    for ki in range(3):
        for kj in range(3):
            cols[:, ki, kj] = xp[:, :, ki:ki + h, kj:kj + w].transpose(1, 0, 2, 3)
    return cols.reshape(c * 9, b * h * w)


def col2im3(dcols: np.ndarray, shape) -> np.ndarray:
    """Adjoint of :func:`im2col3`: scatter-add columns back to (B, C, H, W)."""
    b, c, h, w = shape
    dcols = dcols.reshape(c, 3, 3, b, h, w)
    dxp = np.zeros((b, c, h + 2, w + 2))
    for ki in range(3):
        for kj in range(3):
            dxp[:, :, ki:ki + h, kj:kj + w] += dcols[:, ki, kj].transpose(1, 0, 2, 3)
    return dxp[:, :, 1:-1, 1:-1]


def conv3_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Same-padded 3x3 convolution: (B, C, H, W) -> (B, O, H, W)."""
    b, c, h, w = x.shape
    o = weight.shape[0]
    cols = im2col3(x)
    out = weight.reshape(o, c * 9) @ cols + bias[:, None]
    return out.reshape(o, b, h, w).transpose(1, 0, 2, 3)


def conv3_backward(dout: np.ndarray, x: np.ndarray, weight: np.ndarray):
    """Gradients of a 3x3 conv: returns (dx, dweight, dbias)."""
    b, c, h, w = x.shape
    o = weight.shape[0]
    cols = im2col3(x)
    dout2 = dout.transpose(1, 0, 2, 3).reshape(o, b * h * w)
    dweight = (dout2 @ cols.T).reshape(o, c, 3, 3)
    dbias = dout.sum(axis=(0, 2, 3))
    dcols = weight.reshape(o, c * 9).T @ dout2
    return col2im3(dcols, x.shape), dweight, dbias


def relu_forward(x: np.ndarray):
    """Rectifier; returns (output, mask) with the mask cached for backward."""
    mask = x > 0
    return x * mask, mask


def relu_backward(dout: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return dout * mask


def maxpool2_forward(x: np.ndarray):
    """2x2 max pooling, stride 2; returns (output, argmax cache).

    Ties take the first maximum in row-major window order, so the backward
    pass routes each gradient to exactly one input.
    """
    b, c, h, w = x.shape
    hw = x.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    windows = hw.reshape(b, c, h // 2, w // 2, 4)
    arg = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]
    return out, (arg, x.shape)


def maxpool2_backward(dout: np.ndarray, cache) -> np.ndarray:
    arg, shape = cache
    b, c, h, w = shape
    dwin = np.zeros((b, c, h // 2, w // 2, 4))
    np.put_along_axis(dwin, arg[..., None], dout[..., None], axis=-1)
    return dwin.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(shape)


def upsample2_forward(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbor x2 in both spatial directions."""
    return np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)


def upsample2_backward(dout: np.ndarray) -> np.ndarray:
    b, c, h, w = dout.shape
    return dout.reshape(b, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


def dropout_forward(x: np.ndarray, p: float, rng: np.random.Generator):
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p),
    so inference needs no rescaling.  Returns (output, mask)."""
    if p == 0.0:
        return x, None
    mask = rng.random(x.shape) >= p
    return x * mask / (1.0 - p), mask


def dropout_backward(dout: np.ndarray, mask, p: float) -> np.ndarray:
    if mask is None:
        return dout
    return dout * mask / (1.0 - p)
