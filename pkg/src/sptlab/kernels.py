"""Backend selection for the stepping kernels.

The compiled extension is preferred when importable; set SPTLAB_PURE_PYTHON=1
to force the numpy fallback (used by the test matrix and the benchmark).
"""
from __future__ import annotations

import os

from . import _kernels_py

_FORCE_PY = os.environ.get("SPTLAB_PURE_PYTHON", "") not in ("", "0")

try:
    from . import _kernels  # type: ignore[attr-defined]

    HAVE_COMPILED = True
except ImportError:
    _kernels = None
    HAVE_COMPILED = False

_DEFAULT = _kernels if (HAVE_COMPILED and not _FORCE_PY) else _kernels_py


def get_backend(name: str = "auto"):
    """Return the kernel module for backend name 'auto', 'compiled' or 'python'."""
    if name == "auto":
        return _DEFAULT
    if name == "python":
        return _kernels_py
    if name == "compiled":
        if not HAVE_COMPILED:
            raise RuntimeError("compiled kernels are not available in this installation")
        return _kernels
    raise ValueError(f"unknown backend {name!r} (expected 'auto', 'compiled' or 'python')")


def backend_name(name: str = "auto") -> str:
    return get_backend(name).BACKEND
