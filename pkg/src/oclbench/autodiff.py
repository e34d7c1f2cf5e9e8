"""Minimal reverse-mode automatic differentiation over numpy arrays.

Every operation records its parent tensors and a closure that maps the
output gradient to parent gradients. ``Tensor.backward()`` walks the
recorded graph in reverse topological order and accumulates into the
``.grad`` buffers. Everything is float64; this module favors being easy
to audit over being fast.
"""

from __future__ import annotations

import numpy as np

_GRAD_ENABLED = True


class no_grad:
    """Context manager that disables graph recording (evaluation path)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, exc_type, exc, tb):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """Array node in the computation graph.

    Parameters are leaf tensors constructed with ``requires_grad=True``;
    they always carry a zero-initialized gradient slot of identical shape.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self._parents: tuple = ()
        self._grad_fn = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def has_graph(self) -> bool:
        return self.requires_grad

    def detach(self) -> "Tensor":
        """Constant copy of this node; gradients stop here."""
        return Tensor(self.data)

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def backward(self):
        """Accumulate d(self)/d(leaf) into every reachable ``.grad``."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        if not self.requires_grad:
            raise RuntimeError("no computation graph recorded for this tensor")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad = self.grad + np.ones_like(self.data)
        for node in reversed(topo):
            if node._grad_fn is None:
                continue
            for parent, grad in zip(node._parents, node._grad_fn(node.grad)):
                if not parent.requires_grad or grad is None:
                    continue
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad = parent.grad + grad

    # -- operator sugar ------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __truediv__(self, scalar):
        return mul(self, 1.0 / float(scalar))

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def sum(self, axis=None):
        return tsum(self, axis=axis)

    def mean(self):
        return tmean(self)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _result(data, parents, grad_fn) -> Tensor:
    requires = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=requires)
    if requires:
        out._parents = tuple(parents)
        out._grad_fn = grad_fn
    return out


# -- arithmetic --------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def grad_fn(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _result(data, (a, b), grad_fn)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def grad_fn(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _result(data, (a, b), grad_fn)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def grad_fn(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return _result(data, (a, b), grad_fn)


def neg(a) -> Tensor:
    a = as_tensor(a)

    def grad_fn(g):
        return (-g,)

    return _result(-a.data, (a,), grad_fn)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul expects 2-D operands")
    data = a.data @ b.data

    def grad_fn(g):
        return g @ b.data.T, a.data.T @ g

    return _result(data, (a, b), grad_fn)


def relu(a) -> Tensor:
    a = as_tensor(a)
    data = np.maximum(a.data, 0.0)

    def grad_fn(g):
        return (g * (a.data > 0.0),)

    return _result(data, (a,), grad_fn)


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ValueError("transpose expects a 2-D tensor")

    def grad_fn(g):
        return (g.T,)

    return _result(a.data.T, (a,), grad_fn)


def tsum(a, axis=None) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis)

    def grad_fn(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        expanded = np.expand_dims(g, axis)
        return (np.broadcast_to(expanded, a.data.shape).copy(),)

    return _result(data, (a,), grad_fn)


def tmean(a) -> Tensor:
    a = as_tensor(a)
    if a.data.size == 0:
        raise ValueError("mean of an empty tensor")
    data = a.data.mean()
    scale = 1.0 / a.data.size

    def grad_fn(g):
        return (np.broadcast_to(g * scale, a.data.shape).copy(),)

    return _result(data, (a,), grad_fn)


# -- indexing ----------------------------------------------------------


def take_rows(a, rows) -> Tensor:
    """Select rows of a 2-D tensor; scatters gradient back by index."""
    a = as_tensor(a)
    rows = np.asarray(rows, dtype=np.int64)
    data = a.data[rows]

    def grad_fn(g):
        out = np.zeros_like(a.data)
        np.add.at(out, rows, g)
        return (out,)

    return _result(data, (a,), grad_fn)


def take_columns(a, cols) -> Tensor:
    """Select columns of a 2-D tensor.

    The backward pass scatters into the selected columns only, so
    gradients for every excluded column are exactly zero (bitwise).
    """
    a = as_tensor(a)
    cols = np.asarray(cols, dtype=np.int64)
    if a.data.ndim != 2:
        raise ValueError("take_columns expects a 2-D tensor")
    data = a.data[:, cols]

    def grad_fn(g):
        out = np.zeros_like(a.data)
        np.add.at(out, (slice(None), cols), g)
        return (out,)

    return _result(data, (a,), grad_fn)


def pick(a, cols) -> Tensor:
    """out[i] = a[i, cols[i]] for a 2-D tensor."""
    a = as_tensor(a)
    cols = np.asarray(cols, dtype=np.int64)
    n = a.data.shape[0]
    rows = np.arange(n)
    data = a.data[rows, cols]

    def grad_fn(g):
        out = np.zeros_like(a.data)
        np.add.at(out, (rows, cols), g)
        return (out,)

    return _result(data, (a,), grad_fn)


# -- reductions with stable softmax structure --------------------------


def logsumexp(a) -> Tensor:
    """Row-wise log-sum-exp of a 2-D tensor, max-shifted for stability."""
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ValueError("logsumexp expects a 2-D tensor")
    m = a.data.max(axis=1)
    data = m + np.log(np.exp(a.data - m[:, None]).sum(axis=1))

    def grad_fn(g):
        soft = np.exp(a.data - data[:, None])
        return (g[:, None] * soft,)

    return _result(data, (a,), grad_fn)


def masked_logsumexp(a, include) -> Tensor:
    """Row-wise log-sum-exp over entries where `include` is True.

    Every row must include at least one entry.
    """
    a = as_tensor(a)
    include = np.asarray(include, dtype=bool)
    if include.shape != a.data.shape:
        raise ValueError("mask shape must match tensor shape")
    if not include.any(axis=1).all():
        raise ValueError("masked_logsumexp: some row has no included entries")
    masked = np.where(include, a.data, -np.inf)
    m = masked.max(axis=1)
    data = m + np.log(np.exp(masked - m[:, None]).sum(axis=1))

    def grad_fn(g):
        weights = np.where(include, np.exp(a.data - data[:, None]), 0.0)
        return (g[:, None] * weights,)

    return _result(data, (a,), grad_fn)


# -- row geometry ------------------------------------------------------


def normalize_rows(a, eps: float = 1e-12) -> Tensor:
    """Scale each row to unit L2 norm; rows with norm < eps become zero."""
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ValueError("normalize_rows expects a 2-D tensor")
    norms = np.sqrt((a.data * a.data).sum(axis=1))
    safe = norms >= eps
    denom = np.where(safe, norms, 1.0)
    data = np.where(safe[:, None], a.data / denom[:, None], 0.0)

    def grad_fn(g):
        # d(x/|x|) = (g - y (g.y)) / |x| with y the normalized row
        dot = (g * data).sum(axis=1)
        out = (g - data * dot[:, None]) / denom[:, None]
        return (np.where(safe[:, None], out, 0.0),)

    return _result(data, (a,), grad_fn)


def row_norms(a) -> Tensor:
    """Per-row L2 norms of a 2-D tensor; zero rows get zero gradient."""
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ValueError("row_norms expects a 2-D tensor")
    data = np.sqrt((a.data * a.data).sum(axis=1))

    def grad_fn(g):
        denom = np.where(data > 0.0, data, 1.0)
        out = g[:, None] * a.data / denom[:, None]
        return (np.where((data > 0.0)[:, None], out, 0.0),)

    return _result(data, (a,), grad_fn)
