"""Numba/numpy backend selection for the hot kernels.

The two-layer forward/gradient kernels exist in two flavors: numba ``@njit``
loops and a pure-numpy fallback. Selection order:

1. ``MFPATHS_BACKEND=numpy`` forces the numpy path;
2. ``MFPATHS_BACKEND=numba`` requires numba (raises if missing);
3. default (``auto``): numba when importable, numpy otherwise.

``set_backend()`` overrides the choice at runtime (used by the tests and the
benchmark to exercise both paths in one process). Results of the two backends
agree to float rounding, not bitwise; each backend is individually
deterministic run to run.
"""
from __future__ import annotations

import os

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(fn):
            return fn

        return deco


_env = os.environ.get("MFPATHS_BACKEND", "auto").strip().lower()
if _env not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"MFPATHS_BACKEND must be one of auto|numba|numpy, got {_env!r}"
    )
if _env == "numba" and not HAS_NUMBA:
    raise ImportError("MFPATHS_BACKEND=numba but numba is not importable")

_backend = _env


def set_backend(name: str) -> None:
    """Force 'numba', 'numpy', or 'auto' (process-wide)."""
    global _backend
    name = name.strip().lower()
    if name not in ("auto", "numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise ImportError("numba backend requested but numba is not importable")
    _backend = name


def backend_name() -> str:
    return "numba" if use_numba() else "numpy"


def use_numba() -> bool:
    if _backend == "numpy":
        return False
    if _backend == "numba":
        return True
    return HAS_NUMBA


def njit_or_identity(fn):
    """Return an njit-compiled copy of fn when numba exists, else fn itself."""
    if HAS_NUMBA:
        return njit(cache=True)(fn)
    return fn
