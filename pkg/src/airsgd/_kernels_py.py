"""Pure-numpy fallbacks for the compiled kernels. Same contracts as
airsgd._kernels; see airsgd.kernels for selection."""

import numpy as np


def sparse_project(basis_t, support, values):
    if values.shape[0] != support.shape[0]:
        raise ValueError("support and values length mismatch")
    s = basis_t.shape[1]
    if support.shape[0] == 0:
        return np.zeros(s, dtype=basis_t.dtype)
    if np.any(support < 0) or np.any(support >= basis_t.shape[0]):
        raise IndexError("support index out of range")
    # gathers k contiguous rows then one gemv; the copy is the price of numpy
    return values @ basis_t[support]


def soft_threshold_count(x, tau):
    if tau < 0:
        raise ValueError("tau must be non-negative")
    shrunk = np.abs(x) - x.dtype.type(tau)
    mask = shrunk > 0
    out = np.where(mask, np.sign(x) * shrunk, x.dtype.type(0))
    return out, int(np.count_nonzero(mask))
