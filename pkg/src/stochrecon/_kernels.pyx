# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled strided correlation kernels used for wavelet coefficients."""
import numpy as np


def analyze(const double[:, ::1] x, const double[::1] w, Py_ssize_t start,
            Py_ssize_t stride, Py_ssize_t count):
    """out[m, k] = sum_j w[j] * x[m, start + k*stride + j], zero outside x."""
    cdef Py_ssize_t M = x.shape[0], G = x.shape[1], W = w.shape[0]
    cdef Py_ssize_t m, k, j, base, j0, j1
    cdef double acc
    out = np.zeros((M, count), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for m in range(M):
            for k in range(count):
                base = start + k * stride
                j0 = 0 if base >= 0 else -base
                j1 = W if base + W <= G else G - base
                acc = 0.0
                for j in range(j0, j1):
                    acc = acc + w[j] * x[m, base + j]
                o[m, k] = acc
    return out


def synthesize(const double[:, ::1] c, const double[::1] w, Py_ssize_t start,
               Py_ssize_t stride, Py_ssize_t G):
    """Adjoint of :func:`analyze`: out[m, start + k*stride + j] += c[m, k] * w[j]."""
    cdef Py_ssize_t M = c.shape[0], count = c.shape[1], W = w.shape[0]
    cdef Py_ssize_t m, k, j, base, j0, j1
    cdef double ck
    out = np.zeros((M, G), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for m in range(M):
            for k in range(count):
                base = start + k * stride
                j0 = 0 if base >= 0 else -base
                j1 = W if base + W <= G else G - base
                ck = c[m, k]
                for j in range(j0, j1):
                    o[m, base + j] += ck * w[j]
    return out
