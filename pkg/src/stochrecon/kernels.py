"""Kernel selection: compiled extension when available, numpy otherwise.

Set ``STOCHRECON_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if os.environ.get("STOCHRECON_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        _impl = _compiled
        BACKEND = "cython"


def analyze(x, w, start, stride, count):
    """Strided correlation of each row of ``x`` with the taps ``w``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    return _impl.analyze(x, w, int(start), int(stride), int(count))


def synthesize(c, w, start, stride, size):
    """Adjoint of :func:`analyze`, returning rows of length ``size``."""
    c = np.ascontiguousarray(c, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    return _impl.synthesize(c, w, int(start), int(stride), int(size))


def analyze_axis(arr, w, start, stride, count, axis):
    """Apply :func:`analyze` along one axis of an n-d array."""
    moved = np.moveaxis(arr, axis, -1)
    lead = moved.shape[:-1]
    out = analyze(moved.reshape(-1, moved.shape[-1]), w, start, stride, count)
    return np.moveaxis(out.reshape(lead + (count,)), -1, axis)


def synthesize_axis(arr, w, start, stride, size, axis):
    moved = np.moveaxis(arr, axis, -1)
    lead = moved.shape[:-1]
    out = synthesize(moved.reshape(-1, moved.shape[-1]), w, start, stride, size)
    return np.moveaxis(out.reshape(lead + (size,)), -1, axis)
