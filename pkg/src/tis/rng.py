"""Counter-based pseudo-random numbers.

Every draw is a pure function of (seed, counter), so a given seed replays
the identical sequence on any platform: the generator is the splitmix64
finalizer applied to ``seed_scramble + GOLDEN * counter`` using wrapping
64-bit unsigned arithmetic, nothing else.  Floating-point draws are built
only from exact dyadic rationals (no libm calls), keeping them bit-stable
across machines.
"""

from __future__ import annotations

import numpy as np

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INV53 = 2.0 ** -53


def _mix_scalar(z: int) -> int:
    """splitmix64 finalizer on a plain Python int (wrapping at 64 bits)."""
    z &= 0xFFFFFFFFFFFFFFFF
    z = (z ^ (z >> 30)) * _MIX1 & 0xFFFFFFFFFFFFFFFF
    z = (z ^ (z >> 27)) * _MIX2 & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


class Rng:
    """Deterministic stream of draws identified by a 64-bit seed."""

    def __init__(self, seed: int, counter: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.counter = int(counter)
        # scramble once so that nearby seeds give unrelated streams
        self._base = _mix_scalar(self.seed ^ 0x5851F42D4C957F2D)

    def derive(self, *tags) -> "Rng":
        """Child generator with an independent stream; does not advance self.

        Tags may be ints or strings; the same tags always give the same child.
        """
        s = self._base
        for t in tags:
            if isinstance(t, str):
                s = _mix_scalar(s ^ _mix_scalar(len(t) + _GOLDEN))
                for b in t.encode("utf-8"):
                    s = _mix_scalar(s ^ _mix_scalar(b + _GOLDEN))
            else:
                s = _mix_scalar(s ^ _mix_scalar((int(t) & 0xFFFFFFFFFFFFFFFF) + _GOLDEN))
        return Rng(s)

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter, self.counter + n, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            state = (np.uint64(self._base) + np.uint64(_GOLDEN) * (idx + np.uint64(1))) & _MASK
            return _mix_array(state)

    def uniform(self, shape=()) -> np.ndarray:
        """f64 draws in [0, 1), exactly (u64 >> 11) * 2^-53."""
        n = int(np.prod(shape)) if shape else 1
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) * _INV53
        return u.reshape(shape) if shape else u[0]

    def normal(self, shape=(), std: float = 1.0) -> np.ndarray:
        """Approximately standard normal via the 12-uniform (Irwin-Hall) sum.

        Chosen over Box-Muller so draws involve no transcendental libm calls
        and therefore stay bit-identical everywhere.
        """
        n = int(np.prod(shape)) if shape else 1
        u = (self._raw(12 * n) >> np.uint64(11)).astype(np.float64) * _INV53
        z = u.reshape(12, n).sum(axis=0) - 6.0
        z *= std
        return z.reshape(shape) if shape else z[0]

    def integers(self, lo: int, hi: int, shape=()) -> np.ndarray:
        """Integer draws in [lo, hi); modulo reduction (bias < 2^-50 here)."""
        if hi <= lo:
            raise ValueError(f"empty integer range [{lo}, {hi})")
        n = int(np.prod(shape)) if shape else 1
        span = np.uint64(hi - lo)
        v = (self._raw(n) % span).astype(np.int64) + lo
        return v.reshape(shape) if shape else int(v[0])

    def shuffled(self, n: int) -> np.ndarray:
        """A permutation of range(n) (Fisher-Yates driven by this stream)."""
        perm = np.arange(n, dtype=np.int64)
        for i in range(n - 1, 0, -1):
            j = self.integers(0, i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm
