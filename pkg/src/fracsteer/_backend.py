"""Select between numba-compiled kernels and the pure numpy fallbacks.

Set ``FRACSTEER_BACKEND=numpy`` to force the fallback path; the default is
``numba`` whenever numba imports cleanly.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is optional at runtime
    numba = None

REQUESTED = os.environ.get("FRACSTEER_BACKEND", "numba").strip().lower()
if REQUESTED not in ("numba", "numpy"):
    raise RuntimeError(f"FRACSTEER_BACKEND must be 'numba' or 'numpy', got {REQUESTED!r}")

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and REQUESTED == "numba"


def njit(fn):
    """``numba.njit(cache=True)`` when numba is present, identity otherwise."""
    if HAVE_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn
