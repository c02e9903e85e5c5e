"""Dense float64 tensors with reverse-mode differentiation.

Forward calls build a tape of closures; ``backward(loss)`` walks it once in
reverse topological order and accumulates into leaf ``.grad`` buffers.  A
node only keeps its parents while gradients are enabled and some input
requires them, so inference builds no graph at all.

Everything is float64 and row-major contiguous.  Operations are ordinary
deterministic numpy calls; no op mutates an input array.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf as _erf

from .errors import GradientError, ShapeError

_GRAD_ENABLED = True

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


class no_grad:
    """Context manager that suppresses tape recording."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._saved = _GRAD_ENABLED
        _GRAD_ENABLED = False

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._saved
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bwd", "_backward_done")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor data must be finite")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._bwd = None
        self._backward_done = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def T(self) -> "Tensor":
        return transpose2d(self)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar; scalars and arrays are wrapped as constants
    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_wrap(other)))

    def __rsub__(self, other):
        return add(_wrap(other), neg(self))

    def __mul__(self, other):
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _make(data: np.ndarray, parents, bwd) -> Tensor:
    """Internal fast constructor: records the tape edge when needed."""
    t = Tensor.__new__(Tensor)
    t.data = data
    t.grad = None
    t._backward_done = False
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        t.requires_grad = True
        t._parents = tuple(parents)
        t._bwd = bwd
    else:
        t.requires_grad = False
        t._parents = ()
        t._bwd = None
    return t


def _accum(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g, dtype=np.float64)
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `g` down to `shape` (reverses numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def backward(loss: Tensor):
    """Populate gradients of every leaf reachable from `loss`.

    `loss` must be scalar and produced by a recorded computation; invoking
    this twice on the same node is an error (rebuild the graph instead).
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward expects a scalar, got shape {loss.data.shape}")
    if loss._backward_done:
        raise GradientError("backward already ran on this node; rebuild the graph first")
    loss._backward_done = True
    if not loss.requires_grad:
        return

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    if any(n._backward_done and n is not loss for n in topo):
        raise GradientError("graph shares nodes with a consumed backward pass; rebuild it")

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._bwd is not None and node.grad is not None:
            node._bwd(node.grad)
            node._bwd = None  # free closures as we go
            node._backward_done = True
            if node is not loss:
                node.grad = None


def _is_leaf(t: Tensor) -> bool:
    return not t._parents


# ---------------------------------------------------------------------------
# elementwise and structural ops


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def bwd(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g, b.data.shape))

    return _make(out_data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def bwd(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(out_data, (a, b), bwd)


def neg(a: Tensor) -> Tensor:
    def bwd(g):
        _accum(a, -g)

    return _make(-a.data, (a,), bwd)


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)

    def bwd(g):
        _accum(a, g * s)

    return _make(a.data * s, (a,), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.data.shape} x {b.data.shape}")
    out_data = a.data @ b.data

    def bwd(g):
        if a.requires_grad:
            _accum(a, g @ b.data.T)
        if b.requires_grad:
            _accum(b, a.data.T @ g)

    return _make(out_data, (a, b), bwd)


def transpose2d(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose2d expects rank 2, got shape {a.data.shape}")

    def bwd(g):
        _accum(a, g.T)

    return _make(np.ascontiguousarray(a.data.T), (a,), bwd)


def permute(a: Tensor, axes) -> Tensor:
    axes = tuple(int(i) for i in axes)
    inv = tuple(np.argsort(axes))

    def bwd(g):
        _accum(a, np.ascontiguousarray(g.transpose(inv)))

    return _make(np.ascontiguousarray(a.data.transpose(axes)), (a,), bwd)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)

    def bwd(g):
        _accum(a, g.reshape(a.data.shape))

    return _make(a.data.reshape(shape), (a,), bwd)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def bwd(g):
        _accum(a, g * mask)

    return _make(a.data * mask, (a,), bwd)


def gelu(a: Tensor) -> Tensor:
    cdf = 0.5 * (1.0 + _erf(a.data * _INV_SQRT2))

    def bwd(g):
        pdf = np.exp(-0.5 * a.data * a.data) * _INV_SQRT2PI
        _accum(a, g * (cdf + a.data * pdf))

    return _make(a.data * cdf, (a,), bwd)


def sigmoid(a: Tensor) -> Tensor:
    s = np.where(a.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(a.data))),
                 np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))

    def bwd(g):
        _accum(a, g * s * (1.0 - s))

    return _make(s, (a,), bwd)


def exp(a: Tensor) -> Tensor:
    e = np.exp(a.data)

    def bwd(g):
        _accum(a, g * e)

    return _make(e, (a,), bwd)


def log(a: Tensor) -> Tensor:
    def bwd(g):
        _accum(a, g / a.data)

    return _make(np.log(a.data), (a,), bwd)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.data.shape).copy())
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(gg, a.data.shape).copy())

    return _make(np.asarray(out_data, dtype=np.float64), (a,), bwd)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def take_rows(a: Tensor, idx) -> Tensor:
    """Gather rows of a 2D tensor; duplicate indices allowed."""
    idx = np.asarray(idx, dtype=np.int64)
    if a.data.ndim != 2:
        raise ShapeError(f"take_rows expects rank 2, got shape {a.data.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= a.data.shape[0]):
        raise IndexError(f"row index out of range for {a.data.shape[0]} rows")
    out_data = a.data[idx]

    def bwd(g):
        acc = np.zeros_like(a.data)
        np.add.at(acc, idx, g)
        _accum(a, acc)

    return _make(out_data, (a,), bwd)


def concat_rows(parts: list[Tensor]) -> Tensor:
    out_data = np.concatenate([p.data for p in parts], axis=0)
    sizes = [p.data.shape[0] for p in parts]

    def bwd(g):
        off = 0
        for p, s in zip(parts, sizes):
            if p.requires_grad:
                _accum(p, g[off : off + s])
            off += s

    return _make(out_data, tuple(parts), bwd)


def concat_cols(parts: list[Tensor]) -> Tensor:
    out_data = np.concatenate([p.data for p in parts], axis=1)
    sizes = [p.data.shape[1] for p in parts]

    def bwd(g):
        off = 0
        for p, s in zip(parts, sizes):
            if p.requires_grad:
                _accum(p, g[:, off : off + s])
            off += s

    return _make(out_data, tuple(parts), bwd)


def slice_cols(a: Tensor, lo: int, hi: int) -> Tensor:
    def bwd(g):
        acc = np.zeros_like(a.data)
        acc[:, lo:hi] = g
        _accum(a, acc)

    return _make(np.ascontiguousarray(a.data[:, lo:hi]), (a,), bwd)


# ---------------------------------------------------------------------------
# normalization, attention plumbing, loss


def rowmax(a: Tensor) -> Tensor:
    """Per-row maximum of a 2D tensor, shape (M, 1); ties route to the first."""
    if a.data.ndim != 2:
        raise ShapeError(f"rowmax expects rank 2, got shape {a.data.shape}")
    idx = a.data.argmax(axis=1)
    out_data = a.data[np.arange(a.data.shape[0]), idx][:, None]

    def bwd(g):
        acc = np.zeros_like(a.data)
        acc[np.arange(a.data.shape[0]), idx] = g[:, 0]
        _accum(a, acc)

    return _make(np.ascontiguousarray(out_data), (a,), bwd)


def softmax_rows(a: Tensor) -> Tensor:
    """Row softmax of a 2D tensor, computed with max subtraction."""
    if a.data.ndim != 2:
        raise ShapeError(f"softmax_rows expects rank 2, got shape {a.data.shape}")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)

    def bwd(g):
        dot = (g * s).sum(axis=1, keepdims=True)
        _accum(a, s * (g - dot))

    return _make(s, (a,), bwd)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out_data = xhat * gamma.data + beta.data

    def bwd(g):
        if gamma.requires_grad:
            _accum(gamma, _unbroadcast(g * xhat, gamma.data.shape))
        if beta.requires_grad:
            _accum(beta, _unbroadcast(g, beta.data.shape))
        if x.requires_grad:
            gx = g * gamma.data
            m1 = gx.mean(axis=-1, keepdims=True)
            m2 = (gx * xhat).mean(axis=-1, keepdims=True)
            _accum(x, inv * (gx - m1 - xhat * m2))

    return _make(out_data, (x, gamma, beta), bwd)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    out = matmul(x, w)
    return out if b is None else add(out, b)


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log-likelihood of integer `targets` under row logits."""
    targets = np.asarray(targets, dtype=np.int64)
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy expects 2D logits, got {logits.data.shape}")
    n, c = logits.data.shape
    if targets.shape != (n,):
        raise ShapeError(f"targets shape {targets.shape} does not match {n} rows")
    if targets.size and (targets.min() < 0 or targets.max() >= c):
        raise IndexError(f"target class out of range [0, {c})")
    m = logits.data.max(axis=1, keepdims=True)
    shifted = logits.data - m
    lse = np.log(np.exp(shifted).sum(axis=1)) + m[:, 0]
    picked = logits.data[np.arange(n), targets]
    out_data = np.float64((lse - picked).mean())

    def bwd(g):
        soft = np.exp(shifted)
        soft /= soft.sum(axis=1, keepdims=True)
        soft[np.arange(n), targets] -= 1.0
        _accum(logits, (float(g) / n) * soft)

    return _make(np.asarray(out_data), (logits,), bwd)
