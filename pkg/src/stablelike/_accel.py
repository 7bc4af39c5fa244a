"""Numba switch.

Set ``STABLELIKE_DISABLE_NUMBA=1`` to run every hot path through the
vectorized numpy implementations instead of the compiled loops.
"""

import os

_disabled = os.environ.get("STABLELIKE_DISABLE_NUMBA", "").strip().lower() in {
    "1", "true", "yes", "on"}

try:
    if _disabled:
        raise ImportError
    from numba import njit as _numba_njit

    HAVE_NUMBA = True
    import warnings

    from numba.core.errors import NumbaExperimentalFeatureWarning

    # kernels enter the compiled loop as first-class functions
    warnings.filterwarnings("ignore", category=NumbaExperimentalFeatureWarning)
except ImportError:
    HAVE_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when numba is enabled, identity decorator otherwise."""
    if HAVE_NUMBA:
        return _numba_njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


def default_backend():
    return "numba" if HAVE_NUMBA else "numpy"


def resolve_backend(backend=None):
    if backend is None:
        return default_backend()
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is disabled or missing")
    return backend
