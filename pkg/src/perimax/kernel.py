"""Selects the Runge-Kutta stepping kernel at import time.

The compiled extension is preferred; the pure-numpy fallback is used when
the extension is unavailable or when ``PMX_PURE_PYTHON=1`` is set.  Both
implement identical arithmetic, so results differ only by rounding order.
"""
from __future__ import annotations

import os

from . import _kernel_py

if os.environ.get("PMX_PURE_PYTHON") == "1":
    _impl = _kernel_py
else:
    try:
        from . import _kernel as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernel_py

segment_propagate = _impl.segment_propagate


def backend() -> str:
    """Name of the active kernel backend: 'compiled' or 'python'."""
    return _impl.BACKEND
