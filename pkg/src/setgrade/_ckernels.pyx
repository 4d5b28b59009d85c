# cython: language_level=3
"""Compiled twins of the hot kernels in `_kernels_py`.

Plain C loops beat BLAS dispatch for the tiny matrices this model
works with (k x d_h blocks, k <= ~10, d_h ~ 20). Semantics match the
numpy backend; summation order is fixed row-major so results are
deterministic for a given input.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp as c_exp

cnp.import_array()

NAME = "compiled"


def matmul(double[:, ::1] a, double[:, ::1] b):
    """a (m,p) @ b (p,n) -> (m,n)."""
    cdef Py_ssize_t m = a.shape[0], p = a.shape[1], n = b.shape[1]
    out_arr = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, l
    cdef double aij
    for i in range(m):
        for j in range(n):
            out[i, j] = 0.0
        for l in range(p):
            aij = a[i, l]
            for j in range(n):
                out[i, j] += aij * b[l, j]
    return out_arr


def matmul_nt(double[:, ::1] a, double[:, ::1] b):
    """a (m,p) @ b.T for b (n,p) -> (m,n)."""
    cdef Py_ssize_t m = a.shape[0], p = a.shape[1], n = b.shape[0]
    out_arr = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, l
    cdef double acc
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for l in range(p):
                acc += a[i, l] * b[j, l]
            out[i, j] = acc
    return out_arr


def matmul_tn(double[:, ::1] a, double[:, ::1] b):
    """a.T @ b for a (p,m), b (p,n) -> (m,n)."""
    cdef Py_ssize_t p = a.shape[0], m = a.shape[1], n = b.shape[1]
    out_arr = np.zeros((m, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, l
    cdef double ali
    for l in range(p):
        for i in range(m):
            ali = a[l, i]
            for j in range(n):
                out[i, j] += ali * b[l, j]
    return out_arr


def relu(double[:, ::1] x):
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1]
    out_arr = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    for i in range(m):
        for j in range(n):
            out[i, j] = x[i, j] if x[i, j] > 0.0 else 0.0
    return out_arr


def relu_bwd(double[:, ::1] g, double[:, ::1] x):
    """Upstream g masked by x > 0 (subgradient 0 at exactly 0)."""
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1]
    out_arr = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    for i in range(m):
        for j in range(n):
            out[i, j] = g[i, j] if x[i, j] > 0.0 else 0.0
    return out_arr


def softmax_rows(double[:, ::1] x):
    """Row-wise softmax with per-row max subtraction."""
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1]
    out_arr = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double row_max, total
    for i in range(m):
        row_max = x[i, 0]
        for j in range(1, n):
            if x[i, j] > row_max:
                row_max = x[i, j]
        total = 0.0
        for j in range(n):
            out[i, j] = c_exp(x[i, j] - row_max)
            total += out[i, j]
        for j in range(n):
            out[i, j] /= total
    return out_arr


def softmax_rows_bwd(double[:, ::1] g, double[:, ::1] y):
    """Gradient through softmax_rows given its output y."""
    cdef Py_ssize_t m = y.shape[0], n = y.shape[1]
    out_arr = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double dot
    for i in range(m):
        dot = 0.0
        for j in range(n):
            dot += g[i, j] * y[i, j]
        for j in range(n):
            out[i, j] = y[i, j] * (g[i, j] - dot)
    return out_arr


def add_rowvec(double[:, ::1] x, double[:, ::1] v):
    """x (m,n) + row vector v (1,n) added to every row."""
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1]
    out_arr = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    for i in range(m):
        for j in range(n):
            out[i, j] = x[i, j] + v[0, j]
    return out_arr


def col_sum(double[:, ::1] x):
    """Sum over rows -> (1,n)."""
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1]
    out_arr = np.zeros((1, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    for i in range(m):
        for j in range(n):
            out[0, j] += x[i, j]
    return out_arr
