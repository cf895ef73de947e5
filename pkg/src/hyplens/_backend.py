"""Kernel backend selection.

The hot inner loops (scheme steps, batched small-Hermitian eigensolves,
matrix exponentials) exist twice: as numba ``@njit`` kernels and as pure
numpy fallbacks.  The active path is fixed at import time:

  HYPLENS_NUMBA=1   force numba (raises if numba is not importable)
  HYPLENS_NUMBA=0   force the numpy fallbacks
  unset / "auto"    use numba when importable

``benchmarks/bench_kernels.py`` times both paths side by side.
"""

import os

_FLAG = os.environ.get("HYPLENS_NUMBA", "auto").strip().lower()

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

if _FLAG in ("1", "true", "numba"):
    if not HAVE_NUMBA:
        raise ImportError("HYPLENS_NUMBA=1 requested but numba is not importable")
    USE_NUMBA = True
elif _FLAG in ("0", "false", "numpy"):
    USE_NUMBA = False
else:
    USE_NUMBA = HAVE_NUMBA


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
