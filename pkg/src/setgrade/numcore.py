"""Dense 2-D float64 arrays, the model's forward ops, and a reverse-mode tape.

All values are C-contiguous float64 numpy arrays of shape (rows, cols);
`matrix` is the validating constructor. The op set is deliberately small
and closed so the differentiation engine stays auditable: matmul /
matmul_nt, add, sub, add_rowvec, scale, relu, softmax_rows, col_sum,
row_sum, col_max, concat_cols, slice_cols, mean_all, absolute, square.
There is no general broadcasting.

Two ways to run the same ops:

* module-level functions — eager, untaped, for inference and oracles;
* `Tape` methods of the same names — execute eagerly on `Node` values
  and record each step, so `Tape.backward` can replay them in reverse
  and leave dLoss/dLeaf on every leaf.

A tape and its nodes belong to one thread and one backward pass; the
tape is consumed by `backward` and a fresh one is built per training
step. Plain arrays with no tape attachment are immutable by convention
and safe to share read-only.
"""

import numpy as np

from . import kernels
from .errors import ShapeError, UsageError


def matrix(obj):
    """Validate/convert to a (rows, cols) float64 C-contiguous array."""
    arr = np.ascontiguousarray(obj, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ShapeError(f"matrix must be 2-D, got ndim={arr.ndim}")
    return arr


def _require_2d(name, a):
    if not (isinstance(a, np.ndarray) and a.ndim == 2):
        raise ShapeError(f"{name}: expected a 2-D array, got {type(a).__name__}"
                         f"{'' if not hasattr(a, 'shape') else f' with shape {a.shape}'}")


# ---------------------------------------------------------------------------
# eager ops (forward only)
# ---------------------------------------------------------------------------

def matmul(a, b):
    """Matrix product a (m,p) @ b (p,n)."""
    _require_2d("matmul", a)
    _require_2d("matmul", b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} x {b.shape} (inner dims differ)")
    return kernels.active.matmul(a, b)


def matmul_nt(a, b):
    """a (m,p) @ b.T for b (n,p); the projection/attention-score product."""
    _require_2d("matmul_nt", a)
    _require_2d("matmul_nt", b)
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"matmul_nt: {a.shape} x {b.shape}^T (inner dims differ)")
    return kernels.active.matmul_nt(a, b)


def add(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"add: {a.shape} vs {b.shape}")
    return a + b


def sub(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"sub: {a.shape} vs {b.shape}")
    return a - b


def add_rowvec(a, v):
    """Add row vector v (1,n) to every row of a (m,n)."""
    if v.shape != (1, a.shape[1]):
        raise ShapeError(f"add_rowvec: {a.shape} + {v.shape}")
    return kernels.active.add_rowvec(a, v)


def scale(a, c):
    return a * float(c)


def relu(a):
    return kernels.active.relu(a)


def softmax_rows(a):
    """Row-stochastic softmax; stable for entries of any finite magnitude."""
    if a.size == 0:
        raise ShapeError(f"softmax_rows: empty input {a.shape}")
    return kernels.active.softmax_rows(a)


def col_sum(a):
    """Sum over rows -> (1,n)."""
    return kernels.active.col_sum(a)


def row_sum(a):
    """Sum over columns -> (m,1)."""
    return a.sum(axis=1, keepdims=True)


def col_max(a):
    """Column-wise max over rows -> (1,n); ties resolve to the first row."""
    if a.shape[0] == 0:
        raise ShapeError("col_max: empty input")
    return a.max(axis=0, keepdims=True)


def concat_cols(parts):
    """Concatenate matrices with equal row counts along columns."""
    parts = list(parts)
    if not parts:
        raise ShapeError("concat_cols: no inputs")
    rows = parts[0].shape[0]
    for p in parts:
        if p.shape[0] != rows:
            raise ShapeError(f"concat_cols: row counts differ "
                             f"({[p.shape for p in parts]})")
    return np.ascontiguousarray(np.concatenate(parts, axis=1))


def slice_cols(a, start, stop):
    """Contiguous copy of columns [start, stop)."""
    if not (0 <= start < stop <= a.shape[1]):
        raise ShapeError(f"slice_cols: [{start}:{stop}] out of bounds for {a.shape}")
    return np.ascontiguousarray(a[:, start:stop])


def mean_all(a):
    """Mean of all entries -> (1,1)."""
    return np.array([[a.mean()]])


def absolute(a):
    return np.abs(a)


def square(a):
    return a * a


# ---------------------------------------------------------------------------
# reverse-mode tape
# ---------------------------------------------------------------------------

class Node:
    """A value slot: the forward array plus its accumulated gradient."""

    __slots__ = ("value", "grad", "_op_index")

    def __init__(self, value, op_index=None):
        self.value = value
        self.grad = None
        self._op_index = op_index

    @property
    def shape(self):
        return self.value.shape


class Tape:
    """Ordered record of executed ops, replayed in reverse by `backward`."""

    def __init__(self):
        self._ops = []          # (out Node, input Nodes, backward fn)
        self._consumed = False

    # -- construction -------------------------------------------------------

    def leaf(self, array):
        """Wrap a parameter/constant array as an untaped leaf node."""
        return Node(matrix(array))

    def _wrap(self, x):
        return x if isinstance(x, Node) else self.leaf(x)

    def _record(self, value, inputs, backward):
        if self._consumed:
            raise UsageError("tape already consumed by backward")
        out = Node(value, op_index=len(self._ops))
        self._ops.append((out, inputs, backward))
        return out

    # -- ops ----------------------------------------------------------------
    # Each method validates via the eager op, then records a backward
    # closure producing one gradient per input.

    def matmul(self, a, b):
        a, b = self._wrap(a), self._wrap(b)
        out = matmul(a.value, b.value)
        av, bv = a.value, b.value

        def bwd(g):
            return (kernels.active.matmul_nt(g, bv),
                    kernels.active.matmul_tn(av, g))
        return self._record(out, (a, b), bwd)

    def matmul_nt(self, a, b):
        a, b = self._wrap(a), self._wrap(b)
        out = matmul_nt(a.value, b.value)
        av, bv = a.value, b.value

        def bwd(g):
            return (kernels.active.matmul(g, bv),
                    kernels.active.matmul_tn(g, av))
        return self._record(out, (a, b), bwd)

    def add(self, a, b):
        a, b = self._wrap(a), self._wrap(b)
        out = add(a.value, b.value)
        return self._record(out, (a, b), lambda g: (g, g))

    def sub(self, a, b):
        a, b = self._wrap(a), self._wrap(b)
        out = sub(a.value, b.value)
        return self._record(out, (a, b), lambda g: (g, -g))

    def add_rowvec(self, a, v):
        a, v = self._wrap(a), self._wrap(v)
        out = add_rowvec(a.value, v.value)

        def bwd(g):
            return (g, kernels.active.col_sum(g))
        return self._record(out, (a, v), bwd)

    def scale(self, a, c):
        a = self._wrap(a)
        c = float(c)
        out = scale(a.value, c)
        return self._record(out, (a,), lambda g: (g * c,))

    def relu(self, a):
        a = self._wrap(a)
        av = a.value
        out = relu(av)

        def bwd(g):
            return (kernels.active.relu_bwd(g, av),)
        return self._record(out, (a,), bwd)

    def softmax_rows(self, a):
        a = self._wrap(a)
        out = softmax_rows(a.value)

        def bwd(g):
            return (kernels.active.softmax_rows_bwd(g, out),)
        return self._record(out, (a,), bwd)

    def col_sum(self, a):
        a = self._wrap(a)
        rows = a.value.shape[0]
        out = col_sum(a.value)

        def bwd(g):
            return (np.repeat(g, rows, axis=0),)
        return self._record(out, (a,), bwd)

    def row_sum(self, a):
        a = self._wrap(a)
        cols = a.value.shape[1]
        out = row_sum(a.value)

        def bwd(g):
            return (np.repeat(g, cols, axis=1),)
        return self._record(out, (a,), bwd)

    def col_max(self, a):
        a = self._wrap(a)
        av = a.value
        idx = av.argmax(axis=0)
        out = col_max(av)

        def bwd(g):
            ga = np.zeros_like(av)
            ga[idx, np.arange(av.shape[1])] = g[0]
            return (ga,)
        return self._record(out, (a,), bwd)

    def concat_cols(self, parts):
        parts = [self._wrap(p) for p in parts]
        out = concat_cols([p.value for p in parts])
        widths = [p.value.shape[1] for p in parts]
        edges = np.cumsum([0] + widths)

        def bwd(g):
            return tuple(np.ascontiguousarray(g[:, edges[i]:edges[i + 1]])
                         for i in range(len(parts)))
        return self._record(out, tuple(parts), bwd)

    def slice_cols(self, a, start, stop):
        a = self._wrap(a)
        out = slice_cols(a.value, start, stop)
        shape = a.value.shape

        def bwd(g):
            ga = np.zeros(shape)
            ga[:, start:stop] = g
            return (ga,)
        return self._record(out, (a,), bwd)

    def mean_all(self, a):
        a = self._wrap(a)
        n = a.value.size
        shape = a.value.shape
        out = mean_all(a.value)

        def bwd(g):
            return (np.full(shape, g[0, 0] / n),)
        return self._record(out, (a,), bwd)

    def absolute(self, a):
        a = self._wrap(a)
        av = a.value
        out = absolute(av)

        def bwd(g):
            return (g * np.sign(av),)     # sign(0) = 0: |x| subgradient choice
        return self._record(out, (a,), bwd)

    def square(self, a):
        a = self._wrap(a)
        av = a.value
        out = square(av)

        def bwd(g):
            return (g * (2.0 * av),)
        return self._record(out, (a,), bwd)

    # -- backward ------------------------------------------------------------

    def backward(self, loss):
        """Propagate dLoss/d(everything); consumes the tape.

        `loss` must be a 1x1 node produced by this tape. Afterwards every
        leaf that fed the computation carries a gradient of its own shape
        (zeros if it turned out not to influence the loss).
        """
        if self._consumed:
            raise UsageError("tape already consumed by backward")
        if not isinstance(loss, Node) or loss._op_index is None \
                or loss._op_index >= len(self._ops) \
                or self._ops[loss._op_index][0] is not loss:
            raise UsageError("backward target was not produced by this tape")
        if loss.shape != (1, 1):
            raise UsageError(f"backward target must be 1x1, got {loss.shape}")

        for out, inputs, _ in self._ops:
            out.grad = None
            for inp in inputs:
                if inp._op_index is None and inp.grad is None:
                    inp.grad = np.zeros_like(inp.value)
        loss.grad = np.ones((1, 1))

        for out, inputs, bwd in reversed(self._ops):
            if out.grad is None:
                continue
            for inp, g in zip(inputs, bwd(out.grad)):
                if inp.grad is None:
                    inp.grad = g
                else:
                    inp.grad = inp.grad + g

        self._ops.clear()
        self._consumed = True
