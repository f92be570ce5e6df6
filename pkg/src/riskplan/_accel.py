"""Backend selection for the hot kernels.

Set ``RISKPLAN_BACKEND=numpy`` to run every kernel as plain Python/numpy.
The default is ``numba`` when it can be imported.
"""

import os

BACKEND = os.environ.get("RISKPLAN_BACKEND", "numba").strip().lower()
if BACKEND not in ("numba", "numpy"):
    raise ImportError(f"RISKPLAN_BACKEND must be 'numba' or 'numpy', got {BACKEND!r}")

if BACKEND == "numba":
    try:
        from numba import njit as _njit
    except ImportError:  # pragma: no cover - numba is a hard dependency
        BACKEND = "numpy"

USE_NUMBA = BACKEND == "numba"


def maybe_njit(func):
    """Compile ``func`` with numba when the numba backend is active."""
    if USE_NUMBA:
        return _njit(cache=True)(func)
    return func
