"""Select numba-compiled or plain-Python kernels.

Set ``BOXCALIB_DISABLE_NUMBA=1`` before import to run every kernel as
ordinary Python/numpy code (useful for debugging and for the benchmark in
``benchmarks/bench_kernels.py``). Numba's own ``NUMBA_DISABLE_JIT`` is
honoured too.
"""

import os

_FALSY = ("", "0", "false", "no")

USE_NUMBA = os.environ.get("BOXCALIB_DISABLE_NUMBA", "").lower() in _FALSY

if USE_NUMBA:
    try:
        from numba import njit as _njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False


def jit(f):
    if USE_NUMBA:
        return _njit(f, cache=True, nogil=True)
    return f


def backend_name():
    return "numba" if USE_NUMBA else "python"
