"""Pure-numpy kernel implementations.

Semantics contract shared with numba_impl (bitwise-identical outputs):

* im2col3: 3x3x3 patches of a zero-padded (X, Y, Z, C) grid, one row per
  voxel in C-scan order of (X, Y, Z), columns ordered (dx, dy, dz, c).
* col2im3: exact adjoint of im2col3; per output cell the 27 offset
  contributions are added in ascending (dx, dy, dz) order.
* label_components: connected components of a boolean grid; component ids
  are 1..n in order of each component's first voxel in the x-fastest scan
  (x varies fastest, then y, then z).
"""

from __future__ import annotations

import numpy as np

_HUGE = np.iinfo(np.int64).max


def im2col3(x: np.ndarray) -> np.ndarray:
    X, Y, Z, C = x.shape
    pad = np.zeros((X + 2, Y + 2, Z + 2, C), dtype=np.float64)
    pad[1 : X + 1, 1 : Y + 1, 1 : Z + 1] = x
    win = np.lib.stride_tricks.sliding_window_view(pad, (3, 3, 3), axis=(0, 1, 2))
    # win: (X, Y, Z, C, 3, 3, 3) -> (X, Y, Z, 3, 3, 3, C)
    cols = win.transpose(0, 1, 2, 4, 5, 6, 3)
    return np.ascontiguousarray(cols).reshape(X * Y * Z, 27 * C)


def col2im3(gcols: np.ndarray, X: int, Y: int, Z: int, C: int) -> np.ndarray:
    g = gcols.reshape(X, Y, Z, 3, 3, 3, C)
    gpad = np.zeros((X + 2, Y + 2, Z + 2, C), dtype=np.float64)
    for dx in range(3):
        for dy in range(3):
            for dz in range(3):
                gpad[dx : dx + X, dy : dy + Y, dz : dz + Z] += g[:, :, :, dx, dy, dz, :]
    return gpad[1 : X + 1, 1 : Y + 1, 1 : Z + 1].copy()


def _neighbor_offsets(connectivity: int) -> list[tuple[int, int, int]]:
    if connectivity == 6:
        return [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)]
    if connectivity == 26:
        return [
            (dx, dy, dz)
            for dx in (-1, 0, 1)
            for dy in (-1, 0, 1)
            for dz in (-1, 0, 1)
            if (dx, dy, dz) != (0, 0, 0)
        ]
    raise ValueError(f"connectivity must be 6 or 26, got {connectivity}")


def label_components(mask: np.ndarray, connectivity: int = 6):
    """Min-index propagation until fixpoint, then relabel by first voxel."""
    offsets = _neighbor_offsets(connectivity)
    mask = mask.astype(bool)
    X, Y, Z = mask.shape
    ix, iy, iz = np.indices((X, Y, Z))
    lin = (ix + X * (iy + Y * iz)).astype(np.int64)
    lab = np.where(mask, lin, _HUGE)
    while True:
        best = lab.copy()
        for dx, dy, dz in offsets:
            shifted = np.full_like(lab, _HUGE)
            src = tuple(
                slice(max(-d, 0), dim - max(d, 0)) for d, dim in zip((dx, dy, dz), (X, Y, Z))
            )
            dst = tuple(
                slice(max(d, 0), dim - max(-d, 0)) for d, dim in zip((dx, dy, dz), (X, Y, Z))
            )
            shifted[dst] = lab[src]
            np.minimum(best, shifted, out=best)
        best[~mask] = _HUGE
        np.minimum(best, lab, out=best)
        if np.array_equal(best, lab):
            break
        lab = best
    labels = np.zeros((X, Y, Z), dtype=np.int32)
    roots = lab[mask]
    if roots.size == 0:
        return labels, 0
    # each component's root is its minimal x-fastest linear index, i.e. the
    # first voxel a scan would discover; ascending roots == discovery order
    uniq = np.unique(roots)
    labels[mask] = (np.searchsorted(uniq, roots) + 1).astype(np.int32)
    return labels, len(uniq)
