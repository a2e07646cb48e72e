"""Kernel backend selection.

Hot numeric loops (the per-packet window update and the tree split
search) are compiled with numba by default. Setting ``NETSIFT_NUMBA=0``
in the environment selects the uncompiled fallback path instead, which
is useful for debugging and for cross-checking the compiled kernels.
Both paths produce identical results; ``benchmarks/bench_backends.py``
compares their speed.
"""

import os

_TRUTHY = {"1", "true", "yes", "on"}
_FALSY = {"0", "false", "no", "off"}


def numba_enabled() -> bool:
    """True when the numba-compiled kernel path is active."""
    raw = os.environ.get("NETSIFT_NUMBA", "1").strip().lower()
    if raw in _FALSY:
        return False
    if raw in _TRUTHY:
        return True
    raise ValueError(f"NETSIFT_NUMBA must be a boolean flag, got {raw!r}")


def active_backend() -> str:
    return "numba" if numba_enabled() else "numpy"
