# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled hot kernels: sparse projection and fused soft threshold.

Mirrors airsgd._kernels_py exactly; the facade in airsgd.kernels picks
whichever is importable.
"""

import numpy as np

cimport cython
cimport numpy as cnp

cnp.import_array()

ctypedef fused real:
    float
    double


def sparse_project(real[:, ::1] basis_t, cnp.int64_t[::1] support, real[::1] values):
    """Project a sparse vector through the stored transposed basis.

    basis_t is (d, s) C-contiguous with basis_t[i, j] = A[j, i]; the result is
    A @ x for x having `values` on `support` and zeros elsewhere. Row-major
    accumulation keeps every inner pass contiguous.
    """
    cdef Py_ssize_t n = support.shape[0]
    cdef Py_ssize_t s = basis_t.shape[1]
    cdef Py_ssize_t d = basis_t.shape[0]
    cdef Py_ssize_t i, j, row
    cdef real v
    if values.shape[0] != n:
        raise ValueError("support and values length mismatch")
    out_arr = np.zeros(s, dtype=np.asarray(basis_t).dtype)
    cdef real[::1] out = out_arr
    for i in range(n):
        row = <Py_ssize_t> support[i]
        if row < 0 or row >= d:
            raise IndexError("support index out of range")
        v = values[i]
        if v == 0:
            continue
        for j in range(s):
            out[j] += v * basis_t[row, j]
    return out_arr


def soft_threshold_count(real[::1] x, double tau):
    """Soft-threshold x at tau; returns (result, number of surviving entries)."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i
    cdef long long count = 0
    cdef double v, t = tau
    if t < 0:
        raise ValueError("tau must be non-negative")
    out_arr = np.empty(n, dtype=np.asarray(x).dtype)
    cdef real[::1] out = out_arr
    for i in range(n):
        v = x[i]
        if v > t:
            out[i] = <real> (v - t)
            count += 1
        elif v < -t:
            out[i] = <real> (v + t)
            count += 1
        else:
            out[i] = 0
    return out_arr, count
