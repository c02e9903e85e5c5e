"""Gradient-capable spatial ops for channels-last voxel grids.

Convolution runs as im2col + one matmul so the heavy loops live in the
backend kernels and BLAS; its backward is the exact adjoint (col2im is the
transpose of im2col by construction, which the kernel tests pin down).
Pooling and upsampling are reshape tricks and stay backend-independent.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import ShapeError
from .tensor import Tensor, _make, _accum


def conv3d(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """3x3x3 same-padding convolution; w has shape (27*Cin, Cout)."""
    if x.data.ndim != 4:
        raise ShapeError(f"conv3d expects (H, W, D, Cin), got {x.data.shape}")
    h, wd, d, cin = x.data.shape
    if w.data.ndim != 2 or w.data.shape[0] != 27 * cin:
        raise ShapeError(
            f"conv3d weight must be ({27 * cin}, Cout) for Cin={cin}, got {w.data.shape}")
    cout = w.data.shape[1]
    cols = kernels.im2col3(x.data)
    out = cols @ w.data
    if b is not None:
        if b.data.shape != (cout,):
            raise ShapeError(f"conv3d bias must be ({cout},), got {b.data.shape}")
        out += b.data
    out_data = out.reshape(h, wd, d, cout)
    parents = (x, w) if b is None else (x, w, b)

    def bwd(g):
        gmat = g.reshape(-1, cout)
        if w.requires_grad:
            _accum(w, cols.T @ gmat)
        if b is not None and b.requires_grad:
            _accum(b, gmat.sum(axis=0))
        if x.requires_grad:
            _accum(x, kernels.col2im3(gmat @ w.data.T, h, wd, d, cin))

    return _make(out_data, parents, bwd)


def avgpool2(x: Tensor) -> Tensor:
    """2x2x2 mean pooling with stride 2."""
    if x.data.ndim != 4:
        raise ShapeError(f"avgpool2 expects (H, W, D, C), got {x.data.shape}")
    h, w, d, c = x.data.shape
    if h % 2 or w % 2 or d % 2:
        raise ShapeError(f"avgpool2 needs even extents, got {x.data.shape}")
    blocks = x.data.reshape(h // 2, 2, w // 2, 2, d // 2, 2, c)
    out_data = blocks.mean(axis=(1, 3, 5))

    def bwd(g):
        gb = np.broadcast_to(
            g[:, None, :, None, :, None, :] / 8.0, (h // 2, 2, w // 2, 2, d // 2, 2, c))
        _accum(x, gb.reshape(h, w, d, c).copy())

    return _make(np.ascontiguousarray(out_data), (x,), bwd)


def upsample_nn2(x: Tensor) -> Tensor:
    """Nearest-neighbor 2x upsampling along all three spatial axes."""
    if x.data.ndim != 4:
        raise ShapeError(f"upsample_nn2 expects (h, w, d, C), got {x.data.shape}")
    h, w, d, c = x.data.shape
    big = np.broadcast_to(
        x.data[:, None, :, None, :, None, :], (h, 2, w, 2, d, 2, c))
    out_data = np.ascontiguousarray(big).reshape(2 * h, 2 * w, 2 * d, c)

    def bwd(g):
        _accum(x, g.reshape(h, 2, w, 2, d, 2, c).sum(axis=(1, 3, 5)))

    return _make(out_data, (x,), bwd)


def paste_window(base: np.ndarray, patch: Tensor, lo) -> Tensor:
    """Copy of constant `base` with `patch` written at corner `lo`.

    Gradients flow only into the patch; the surrounding context is fixed.
    """
    if base.ndim != 4 or patch.data.ndim != 4 or base.shape[3] != patch.data.shape[3]:
        raise ShapeError(
            f"paste_window: base {base.shape} and patch {patch.data.shape} disagree")
    x0, y0, z0 = (int(v) for v in lo)
    ph, pw, pd, _ = patch.data.shape
    if (x0 < 0 or y0 < 0 or z0 < 0 or x0 + ph > base.shape[0]
            or y0 + pw > base.shape[1] or z0 + pd > base.shape[2]):
        raise ShapeError(
            f"paste_window: patch {patch.data.shape} at {lo} exceeds base {base.shape}")
    out_data = np.array(base, dtype=np.float64)
    out_data[x0 : x0 + ph, y0 : y0 + pw, z0 : z0 + pd, :] = patch.data

    def bwd(g):
        _accum(patch, g[x0 : x0 + ph, y0 : y0 + pw, z0 : z0 + pd, :])

    return _make(out_data, (patch,), bwd)
