"""Dense 1-D/2-D tensors with a reverse-mode tape.

Every op records its output with a monotonically increasing sequence number,
so sorting reachable nodes by that number recovers the execution order and the
backward sweep is just that order reversed.  Leaf gradients accumulate across
``backward`` calls until :meth:`Tensor.zero_grad` is called.
"""
from __future__ import annotations

import itertools
import math
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .errors import ContractError, DegenerateVectorError, DimensionError

EPS = 1e-12

_counter = itertools.count()


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "parents", "backward_fn", "op", "seq")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else np.float64)
        if arr.ndim > 2:
            raise DimensionError(f"tensors are at most 2-D, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(arr) if requires_grad else None
        self.parents: tuple = ()
        self.backward_fn: Callable | None = None
        self.op = "leaf"
        self.seq = next(_counter)

    @property
    def shape(self):
        return self.data.shape

    @property
    def is_leaf(self):
        return not self.parents

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), dtype=self.data.dtype)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def backward(self):
        backward(self)

    # operator sugar
    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, _lift(other, self))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_lift(other, self)))

    def __rsub__(self, other):
        return add(_lift(other, self), neg(self))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / float(other))
        raise TypeError("only division by python scalars is supported")

    def __neg__(self):
        return neg(self)

    @property
    def T(self):
        return transpose(self)


def _lift(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.full(like.shape, x, dtype=like.data.dtype), dtype=like.data.dtype)


def _make(data, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    out = Tensor(data, dtype=data.dtype)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out.backward_fn = backward_fn
    out.op = op
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# --------------------------------------------------------------------------
# primitive ops; each backward_fn maps the output gradient to a tuple of
# parent gradients (None for parents that do not need one)
# --------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def bw(g):
        return (g @ b.data.T if a.requires_grad else None,
                a.data.T @ g if b.requires_grad else None)

    return _make(out, (a, b), bw, "matmul")


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may be a 1-D row bias added to each row of 2-D ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape:
        row_bias = False
    elif a.data.ndim == 2 and b.data.ndim == 1 and b.shape[0] == a.shape[1]:
        row_bias = True
    else:
        raise DimensionError(f"add shape mismatch: {a.shape} + {b.shape}")

    def bw(g):
        return g, (g.sum(axis=0) if row_bias else g)

    return _make(a.data + b.data, (a, b), bw, "add")


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def scale(a: Tensor, c: float) -> Tensor:
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; either side may be a size-1 tensor (scalar broadcast)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape:
        def bw(g):
            return g * b.data, g * a.data
        return _make(a.data * b.data, (a, b), bw, "mul")
    if b.data.size == 1:
        s = b.data.reshape(())

        def bw(g):
            return g * s, np.asarray((g * a.data).sum()).reshape(b.shape)
        return _make(a.data * s, (a, b), bw, "mul")
    if a.data.size == 1:
        return mul(b, a)
    raise DimensionError(f"mul shape mismatch: {a.shape} * {b.shape}")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def relu(a: Tensor) -> Tensor:
    """max(0, x) with subgradient 0 at exactly 0."""
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0).astype(a.data.dtype), (a,),
                 lambda g: (g * mask,), "relu")


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise DimensionError(f"transpose needs a 2-D tensor, got {a.shape}")
    return _make(a.data.T.copy(), (a,), lambda g: (g.T,), "transpose")


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def rows(a: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous row slice ``a[start:stop]``."""
    def bw(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        return (full,)

    return _make(a.data[start:stop].copy(), (a,), bw, "rows")


def sum(a: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001
    shape = a.shape
    if axis is None:
        def bw(g):
            return (np.full(shape, g.reshape(()), dtype=a.data.dtype),)
        return _make(np.asarray(a.data.sum()), (a,), bw, "sum")
    if a.data.ndim != 2 or axis not in (0, 1):
        raise DimensionError(f"sum over axis {axis} unsupported for shape {shape}")

    def bw(g):
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _make(a.data.sum(axis=axis), (a,), bw, "sum")


def mean(a: Tensor) -> Tensor:
    return scale(sum(a), 1.0 / a.data.size)


def l2_normalize(v: Tensor, eps: float = EPS, error=DegenerateVectorError) -> Tensor:
    """Unit-normalize a vector, or each row of a matrix."""
    x = v.data
    norms = np.sqrt((x * x).sum(axis=-1, keepdims=True))
    if np.any(norms <= eps):
        raise error(f"cannot normalize vector with norm <= {eps:g}")
    y = x / norms

    def bw(g):
        # d(x/|x|) = (g - y (y.g)) / |x|
        return ((g - y * (y * g).sum(axis=-1, keepdims=True)) / norms,)

    return _make(y, (v,), bw, "l2_normalize")


def rowwise_dot(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"rowwise_dot shape mismatch: {a.shape} vs {b.shape}")
    if a.data.ndim == 1:
        return sum(mul(a, b))
    return sum(mul(a, b), axis=1)


def cosine_similarity(a: Tensor, b: Tensor, error=DegenerateVectorError) -> Tensor:
    """Cosine of two vectors (scalar) or of matching rows (vector of length N)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"cosine_similarity shape mismatch: {a.shape} vs {b.shape}")
    return rowwise_dot(l2_normalize(a, error=error), l2_normalize(b, error=error))


def cross_entropy_rows(logits: Tensor, targets) -> Tensor:
    """Per-row ``-log softmax(logits[i])[targets[i]]`` (max-shifted)."""
    targets = np.asarray(targets, dtype=np.int64)
    if logits.data.ndim != 2 or targets.shape != (logits.shape[0],):
        raise DimensionError(f"cross_entropy_rows: logits {logits.shape}, targets {targets.shape}")
    n_cls = logits.shape[1]
    if np.any(targets < 0) or np.any(targets >= n_cls):
        raise IndexError(f"target index out of range for {n_cls} classes")
    losses, grad = _kernels.xent_rows(np.ascontiguousarray(logits.data), targets)

    def bw(g):
        return (grad * g[:, None],)

    return _make(losses, (logits,), bw, "cross_entropy_rows")


def softmax_cross_entropy_row(logits: Tensor, target_index: int) -> Tensor:
    logits = as_tensor(logits)
    if logits.data.ndim != 1:
        raise DimensionError(f"expected a 1-D logit vector, got {logits.shape}")
    n = logits.shape[0]
    if not 0 <= target_index < n:
        raise IndexError(f"target index {target_index} out of range for {n} classes")
    out = cross_entropy_rows(reshape(logits, (1, n)), [target_index])
    return reshape(out, ())


def embedding_bag_mean(table: Tensor, idx: np.ndarray, lengths: np.ndarray) -> Tensor:
    """Row ``b`` of the output is the mean of ``table[idx[b, :lengths[b]]]``."""
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    lengths = np.ascontiguousarray(lengths, dtype=np.int64)
    if np.any(lengths <= 0):
        raise ContractError("embedding_bag_mean: every sequence must be non-empty")
    out = _kernels.bag_mean_forward(np.ascontiguousarray(table.data), idx, lengths)

    def bw(g):
        return (_kernels.bag_mean_backward(np.ascontiguousarray(g), idx, lengths, table.shape[0]),)

    return _make(out, (table,), bw, "embedding_bag_mean")


# --------------------------------------------------------------------------
# reverse sweep
# --------------------------------------------------------------------------

def record(root: Tensor) -> list[Tensor]:
    """Recorded (non-leaf) nodes reachable from ``root``, in execution order."""
    seen: set[int] = set()
    nodes: list[Tensor] = []
    stack = [root]
    while stack:
        t = stack.pop()
        if id(t) in seen:
            continue
        seen.add(id(t))
        if t.parents:
            nodes.append(t)
            stack.extend(t.parents)
    nodes.sort(key=lambda t: t.seq)
    return nodes


def backward(root: Tensor) -> None:
    if root.data.size != 1:
        raise ContractError(f"backward() needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return
    if root.is_leaf:
        root.grad = root.grad + np.ones_like(root.data)
        return
    grads = {id(root): np.ones_like(root.data)}
    for node in reversed(record(root)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent.is_leaf:
                parent.grad = parent.grad + pg
            elif id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + pg
            else:
                grads[id(parent)] = pg


def finite_difference_check(f: Callable[[Tensor], Tensor], x, h: float = 1e-5) -> float:
    """Worst relative error between ``backward`` and central differences.

    Relative error uses the denominator ``max(|analytic|, |numeric|, 1e-8)``.
    Any NaN/Inf along the way is reported as ``inf``.
    """
    x0 = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    with np.errstate(all="ignore"):
        leaf = Tensor(x0.copy(), requires_grad=True)
        out = f(leaf)
        if not np.all(np.isfinite(out.data)):
            return math.inf
        backward(out)
        analytic = leaf.grad.reshape(-1)
        numeric = np.empty_like(analytic)
        flat = x0.reshape(-1)
        for i in range(flat.size):
            plus = flat.copy()
            minus = flat.copy()
            plus[i] += h
            minus[i] -= h
            fp = f(Tensor(plus.reshape(x0.shape))).item()
            fm = f(Tensor(minus.reshape(x0.shape))).item()
            numeric[i] = (fp - fm) / (2.0 * h)
    if not (np.all(np.isfinite(analytic)) and np.all(np.isfinite(numeric))):
        return math.inf
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
