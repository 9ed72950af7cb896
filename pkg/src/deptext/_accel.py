"""Backend selection for the numeric kernels.

Set ``DEPTEXT_BACKEND=numpy`` to bypass numba and run the vectorised numpy
kernels instead. The default is ``numba`` whenever it imports cleanly.
"""
from __future__ import annotations

import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

_requested = os.environ.get("DEPTEXT_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"DEPTEXT_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and _requested == "numba"


def njit(fn):
    """``numba.njit(cache=True)`` when numba is installed, identity otherwise.

    Kernels are always compiled if numba is present so the benchmark can
    compare both paths; ``USE_NUMBA`` only controls which path the library
    dispatches to.
    """
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
