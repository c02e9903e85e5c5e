"""Kernel backend selection.

The grid kernels (patch extraction, its scatter-add transpose, connected
component labeling) exist twice: a numba ``@njit`` build and a pure-numpy
build with identical semantics and accumulation order.  ``TIS_BACKEND``
picks one:

    TIS_BACKEND=numba   require numba, fail loudly if unavailable
    TIS_BACKEND=numpy   force the pure-numpy path
    unset / auto        numba when importable, numpy otherwise
"""

from __future__ import annotations

import os

_CHOICE = os.environ.get("TIS_BACKEND", "auto").strip().lower()
if _CHOICE not in ("auto", "numba", "numpy"):
    raise ValueError(f"TIS_BACKEND must be auto|numba|numpy, got {_CHOICE!r}")

if _CHOICE == "numpy":
    _ACTIVE = "numpy"
else:
    try:
        import numba  # noqa: F401

        _ACTIVE = "numba"
    except ImportError:
        if _CHOICE == "numba":
            raise
        _ACTIVE = "numpy"


def active_backend() -> str:
    return _ACTIVE


def get_kernels(name: str | None = None):
    """Kernel namespace for `name` (default: the active backend)."""
    which = name or _ACTIVE
    if which == "numba":
        from .kernels import numba_impl

        return numba_impl
    from .kernels import numpy_impl

    return numpy_impl
