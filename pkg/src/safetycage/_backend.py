"""Kernel backend selection.

The numba kernels are used when numba imports cleanly, unless the
``SAFETYCAGE_BACKEND`` environment variable is set to ``numpy``. Both
backends produce bit-identical results; the switch only affects speed.
"""
import os
from types import ModuleType

from . import _kernels_numpy

try:
    from . import _kernels_numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - depends on the environment
    _kernels_numba = None
    NUMBA_AVAILABLE = False

ENV_VAR = "SAFETYCAGE_BACKEND"
BACKENDS = ("numba", "numpy")


def get_kernels(name: str | None = None) -> ModuleType:
    """Return the kernel module for ``name`` (default: env var, then numba)."""
    if name is None:
        name = os.environ.get(ENV_VAR, "numba" if NUMBA_AVAILABLE else "numpy")
    name = name.lower()
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; expected one of {BACKENDS}")
    if name == "numba":
        if not NUMBA_AVAILABLE:
            raise ImportError("numba backend requested but numba is not installed")
        return _kernels_numba
    return _kernels_numpy


def active_backend() -> str:
    return "numba" if get_kernels() is _kernels_numba else "numpy"
