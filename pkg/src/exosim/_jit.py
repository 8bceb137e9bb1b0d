"""Switch between numba-compiled kernels and the plain numpy path.

Set ``EXOSIM_DISABLE_JIT=1`` before importing :mod:`exosim` to run every
kernel as ordinary Python/numpy code.
"""
import os

_FLAG = os.environ.get("EXOSIM_DISABLE_JIT", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

JIT_ENABLED = numba is not None and _FLAG not in ("1", "true", "yes", "on")

JIT_OPTIONS = {"cache": True, "nogil": True}


def njit(fn=None, **kwargs):
    """``numba.njit`` with package defaults, or a no-op when JIT is off."""
    if fn is None:
        return lambda f: njit(f, **kwargs)
    if not JIT_ENABLED:
        return fn
    return numba.njit(**{**JIT_OPTIONS, **kwargs})(fn)
