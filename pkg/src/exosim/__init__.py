"""Predictive simulation of coupled human-exoskeleton movement."""
from ._jit import JIT_ENABLED

__version__ = "0.1.0"
__all__ = ["JIT_ENABLED", "__version__"]
