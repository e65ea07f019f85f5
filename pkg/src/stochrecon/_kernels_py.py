"""Pure numpy versions of the strided correlation kernels."""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _padding(start, stride, count, width, size):
    last = start + (count - 1) * stride + width if count else start
    return max(0, -start), max(0, last - size)


def analyze(x, w, start, stride, count):
    """out[m, k] = sum_j w[j] * x[m, start + k*stride + j], zero outside x."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    if count <= 0:
        return np.zeros((x.shape[0], 0))
    lo, hi = _padding(start, stride, count, w.size, x.shape[1])
    xp = np.pad(x, ((0, 0), (lo, hi))) if lo or hi else x
    win = sliding_window_view(xp, w.size, axis=1)[:, start + lo::stride][:, :count]
    return win @ w


def synthesize(c, w, start, stride, G):
    """Adjoint of :func:`analyze`."""
    c = np.asarray(c, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    M, count = c.shape
    lo, hi = _padding(start, stride, count, w.size, G)
    out = np.zeros((M, G + lo + hi))
    s0 = start + lo
    if count and stride >= w.size:
        # windows do not overlap: write each tap with one strided slice
        for j in range(w.size):
            out[:, s0 + j:s0 + j + (count - 1) * stride + 1:stride] += c * w[j]
    elif count:
        blocks = c[:, :, None] * w[None, None, :]
        for k in range(count):
            out[:, s0 + k * stride:s0 + k * stride + w.size] += blocks[:, k]
    return out[:, lo:lo + G]
