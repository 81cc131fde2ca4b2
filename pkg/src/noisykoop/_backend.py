"""Selects the compiled E-step kernel when available.

Set ``NOISYKOOP_BACKEND=python`` to force the pure-Python fallback.
"""

import os

from . import _pykernel

python_kernel = _pykernel

try:
    from . import _ckernel as compiled_kernel
except ImportError:  # extension not built
    compiled_kernel = None

if compiled_kernel is not None and os.environ.get("NOISYKOOP_BACKEND", "").lower() != "python":
    kernel = compiled_kernel
    NAME = "cython"
else:
    kernel = python_kernel
    NAME = "python"


def get(name=None):
    """Return the kernel module for ``name`` ('cython', 'python' or None for default)."""
    if name is None:
        return kernel
    if name == "python":
        return python_kernel
    if name == "cython":
        if compiled_kernel is None:
            raise ImportError("compiled kernel noisykoop._ckernel is not built")
        return compiled_kernel
    raise ValueError(f"unknown backend {name!r}")
