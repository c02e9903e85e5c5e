"""Named trainable parameters, the AdamW step, and checkpoint files.

Checkpoints are little-endian binary, magic ``TISCKPT1``: a u32 parameter
count, then per parameter a u32 name length, the UTF-8 name, a u32 rank,
u32 extents, and the float64 payload in C order.  Loading restores bytes
exactly; optimizer state is not stored.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DivergenceError, FormatError, ShapeError
from .tensor import Tensor

_MAGIC = b"TISCKPT1"


class Parameter(Tensor):
    """Leaf tensor registered under a dotted name."""

    __slots__ = ("name",)

    def __init__(self, name: str, data):
        super().__init__(data, requires_grad=True)
        self.name = name

    def grad_or_zeros(self) -> np.ndarray:
        """Gradient buffer, or zeros when the last loss never reached us."""
        return self.grad if self.grad is not None else np.zeros_like(self.data)


class ParamStore:
    """Ordered, name-unique collection of parameters."""

    def __init__(self):
        self._params: dict[str, Parameter] = {}

    def add(self, name: str, data) -> Parameter:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        p = Parameter(name, data)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def values(self) -> list[Parameter]:
        return list(self._params.values())

    def zero_grad(self):
        for p in self._params.values():
            p.grad = None

    def count_scalars(self) -> int:
        return sum(p.data.size for p in self._params.values())


class AdamW:
    """Adam with decoupled weight decay over one ParamStore.

    A non-finite gradient anywhere aborts the step: continuing would poison
    the moment buffers for every later step.
    """

    def __init__(self, store: ParamStore, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.01):
        self.store = store
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.t = 0
        self._m = {name: np.zeros_like(p.data) for name, p in store._params.items()}
        self._v = {name: np.zeros_like(p.data) for name, p in store._params.items()}

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.store._params.items():
            g = p.grad_or_zeros()
            if not np.all(np.isfinite(g)):
                raise DivergenceError(f"non-finite gradient in parameter '{name}'")
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            if self.weight_decay != 0.0:
                p.data -= self.lr * self.weight_decay * p.data
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def save_checkpoint(path, store: ParamStore):
    path = Path(path)
    parts = [_MAGIC, struct.pack("<I", len(store))]
    for name, p in store._params.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", p.data.ndim))
        parts.append(struct.pack(f"<{p.data.ndim}I", *p.data.shape))
        parts.append(np.ascontiguousarray(p.data).astype("<f8").tobytes())
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(b"".join(parts))
    tmp.replace(path)


def load_checkpoint(path, store: ParamStore):
    """Fill `store` in place from a checkpoint written by save_checkpoint.

    Names and shapes must match the store exactly, in any order.
    """
    blob = Path(path).read_bytes()
    if blob[:8] != _MAGIC:
        raise FormatError(f"bad checkpoint magic in {path}")
    off = 8

    def take(n):
        nonlocal off
        if off + n > len(blob):
            raise FormatError(f"truncated checkpoint: {path}")
        chunk = blob[off : off + n]
        off += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    seen = set()
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        name = take(nlen).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        data = np.frombuffer(take(8 * int(np.prod(shape, dtype=np.int64))), dtype="<f8")
        data = data.reshape(shape).astype(np.float64)
        if name not in store:
            raise FormatError(f"checkpoint parameter '{name}' unknown to this model")
        p = store[name]
        if p.data.shape != data.shape:
            raise ShapeError(
                f"checkpoint parameter '{name}' has shape {data.shape}, model wants {p.data.shape}")
        p.data = np.ascontiguousarray(data)
        seen.add(name)
    if off != len(blob):
        raise FormatError(f"trailing bytes in checkpoint: {path}")
    missing = [n for n in store.names() if n not in seen]
    if missing:
        raise FormatError(f"checkpoint missing parameters: {', '.join(missing)}")
