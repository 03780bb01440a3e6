"""Kernel backend selection.

The hot numeric kernels (decision-tree split search, forest prediction) exist
twice: a numba @njit build and a vectorized pure-numpy build. Both compute
bit-identical results; the numba build is typically 5-20x faster on tree
fitting. The active backend is chosen once at import from the environment:

    DGAL_BACKEND=numpy   force the pure-numpy path
    DGAL_BACKEND=numba   require numba (ImportError if unavailable)

Unset: numba when importable, numpy otherwise. Tests and benchmarks may
rebind BACKEND directly; kernel dispatch reads it at call time.
"""

from __future__ import annotations

import os

ENV_VAR = "DGAL_BACKEND"

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


def _resolve() -> str:
    choice = os.environ.get(ENV_VAR, "").strip().lower()
    if choice == "":
        return "numba" if HAVE_NUMBA else "numpy"
    if choice not in ("numba", "numpy"):
        raise ValueError(f"{ENV_VAR} must be 'numba' or 'numpy', got {choice!r}")
    if choice == "numba" and not HAVE_NUMBA:
        raise ImportError(f"{ENV_VAR}=numba but numba is not importable")
    return choice


BACKEND = _resolve()


def active_backend() -> str:
    return BACKEND
