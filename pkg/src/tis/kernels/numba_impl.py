"""Numba builds of the grid kernels; see numpy_impl for the shared contract.

col2im3 accumulates offset-major (offset outer loop, voxels inner) so the
per-cell addition order matches the numpy build bit for bit.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _im2col3(x, out):
    X, Y, Z, C = x.shape
    for i in range(X):
        for j in range(Y):
            for k in range(Z):
                n = (i * Y + j) * Z + k
                col = 0
                for dx in range(-1, 2):
                    for dy in range(-1, 2):
                        for dz in range(-1, 2):
                            a, b, c = i + dx, j + dy, k + dz
                            if 0 <= a < X and 0 <= b < Y and 0 <= c < Z:
                                for ch in range(C):
                                    out[n, col + ch] = x[a, b, c, ch]
                            else:
                                for ch in range(C):
                                    out[n, col + ch] = 0.0
                            col += C
    return out


def im2col3(x: np.ndarray) -> np.ndarray:
    X, Y, Z, C = x.shape
    out = np.empty((X * Y * Z, 27 * C), dtype=np.float64)
    return _im2col3(np.ascontiguousarray(x), out)


@njit(cache=True)
def _col2im3(g, out):
    X, Y, Z, C = out.shape
    col = 0
    for dx in range(-1, 2):
        for dy in range(-1, 2):
            for dz in range(-1, 2):
                for i in range(X):
                    a = i + dx
                    if a < 0 or a >= X:
                        continue
                    for j in range(Y):
                        b = j + dy
                        if b < 0 or b >= Y:
                            continue
                        for k in range(Z):
                            c = k + dz
                            if c < 0 or c >= Z:
                                continue
                            n = (i * Y + j) * Z + k
                            for ch in range(C):
                                out[a, b, c, ch] += g[n, col + ch]
                col += C
    return out


def col2im3(gcols: np.ndarray, X: int, Y: int, Z: int, C: int) -> np.ndarray:
    out = np.zeros((X, Y, Z, C), dtype=np.float64)
    return _col2im3(np.ascontiguousarray(gcols), out)


@njit(cache=True)
def _label_components(mask, connectivity):
    X, Y, Z = mask.shape
    labels = np.zeros((X, Y, Z), dtype=np.int32)
    queue = np.empty((X * Y * Z, 3), dtype=np.int64)
    count = 0
    # x-fastest scan: first voxel of each component fixes its id order
    for z in range(Z):
        for y in range(Y):
            for x in range(X):
                if not mask[x, y, z] or labels[x, y, z] != 0:
                    continue
                count += 1
                labels[x, y, z] = count
                queue[0, 0] = x
                queue[0, 1] = y
                queue[0, 2] = z
                head, tail = 0, 1
                while head < tail:
                    cx, cy, cz = queue[head, 0], queue[head, 1], queue[head, 2]
                    head += 1
                    for dx in range(-1, 2):
                        for dy in range(-1, 2):
                            for dz in range(-1, 2):
                                if dx == 0 and dy == 0 and dz == 0:
                                    continue
                                if connectivity == 6 and abs(dx) + abs(dy) + abs(dz) != 1:
                                    continue
                                nx, ny, nz = cx + dx, cy + dy, cz + dz
                                if not (0 <= nx < X and 0 <= ny < Y and 0 <= nz < Z):
                                    continue
                                if mask[nx, ny, nz] and labels[nx, ny, nz] == 0:
                                    labels[nx, ny, nz] = count
                                    queue[tail, 0] = nx
                                    queue[tail, 1] = ny
                                    queue[tail, 2] = nz
                                    tail += 1
    return labels, count


def label_components(mask: np.ndarray, connectivity: int = 6):
    if connectivity not in (6, 26):
        raise ValueError(f"connectivity must be 6 or 26, got {connectivity}")
    labels, count = _label_components(np.ascontiguousarray(mask.astype(np.uint8)), connectivity)
    return labels, int(count)
