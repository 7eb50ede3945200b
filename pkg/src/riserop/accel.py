"""Numba acceleration switch.

Hot kernels in :mod:`riserop.kernels` are compiled with numba's @njit when it
is available. Set the environment variable ``RISEROP_NO_NUMBA=1`` (before
import) to force the pure-numpy fallback implementations; the flag is also
what ``benchmarks/bench_kernels.py`` flips to compare the two paths.
"""

import os

_TRUTHY = {"1", "true", "yes", "on"}

NUMBA_DISABLED = os.environ.get("RISEROP_NO_NUMBA", "").strip().lower() in _TRUTHY

if not NUMBA_DISABLED:
    try:
        from numba import njit as _njit
        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False
else:
    NUMBA_ENABLED = False


def maybe_njit(func):
    """Compile `func` with numba when enabled, else return it unchanged."""
    if NUMBA_ENABLED:
        return _njit(cache=True)(func)
    return func
