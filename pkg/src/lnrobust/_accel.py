"""Switch between numba-compiled kernels and the plain Python/numpy path.

Set ``LNROBUST_DISABLE_NUMBA=1`` before import to run every kernel
uncompiled.  The kernels are written in the numba-compatible subset of
Python so both paths execute the same source.
"""
import os

DISABLED = os.environ.get("LNROBUST_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if DISABLED:
        raise ImportError
    import numba

    HAS_NUMBA = True
except ImportError:
    numba = None
    HAS_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, otherwise the identity decorator."""
    if HAS_NUMBA:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def backend():
    return "numba" if HAS_NUMBA else "python"
