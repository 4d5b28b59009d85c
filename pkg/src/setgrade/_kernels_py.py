"""Numpy implementations of the hot kernels.

This is the fallback backend; `setgrade._ckernels` provides compiled
twins with identical signatures. Every function takes and returns
C-contiguous float64 2-D arrays and performs no shape validation —
callers (the `numcore` ops) check shapes first.
"""

import numpy as np

NAME = "python"


def matmul(a, b):
    """a (m,p) @ b (p,n) -> (m,n)."""
    return a @ b


def matmul_nt(a, b):
    """a (m,p) @ b.T for b (n,p) -> (m,n)."""
    return a @ b.T


def matmul_tn(a, b):
    """a.T @ b for a (p,m), b (p,n) -> (m,n)."""
    return a.T @ b


def relu(x):
    return np.maximum(x, 0.0)


def relu_bwd(g, x):
    """Upstream g masked by x > 0 (subgradient 0 at exactly 0)."""
    return np.where(x > 0.0, g, 0.0)


def softmax_rows(x):
    """Row-wise softmax with per-row max subtraction."""
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_bwd(g, y):
    """Gradient through softmax_rows given its output y."""
    dot = (g * y).sum(axis=1, keepdims=True)
    return y * (g - dot)


def add_rowvec(x, v):
    """x (m,n) + row vector v (1,n) added to every row."""
    return x + v


def col_sum(x):
    """Sum over rows -> (1,n)."""
    return x.sum(axis=0, keepdims=True)
