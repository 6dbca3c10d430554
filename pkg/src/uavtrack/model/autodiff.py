"""Minimal reverse-mode automatic differentiation over numpy arrays.

Each operation records its parents and a closure that pushes the output
gradient back to them.  ``backward`` walks the graph in reverse topological
order.  Graph recording can be switched off with ``no_grad`` for inference.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np

_GRAD_ENABLED = [True]


@contextlib.contextmanager
def no_grad():
    prev = _GRAD_ENABLED[0]
    _GRAD_ENABLED[0] = False
    try:
        yield
    finally:
        _GRAD_ENABLED[0] = prev


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_backward", "requires_grad", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.asarray(data)
        self.grad = None
        self._parents = ()
        self._backward = None
        self.requires_grad = requires_grad
        self.name = name

    # -- graph plumbing -------------------------------------------------
    @staticmethod
    def _make(data, parents, backward):
        out = Tensor(data)
        if _GRAD_ENABLED[0] and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        return out

    def _accum(self, g, owned: bool = False):
        """Add ``g`` into ``self.grad``; ``owned`` marks a fresh array that may be kept without copying."""
        if not self.requires_grad:
            return
        if self.grad is None:
            if owned and g.dtype == self.data.dtype and g.shape == self.shape and g.flags.writeable:
                self.grad = g
            else:
                self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None):
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data) if grad is None else np.asarray(grad, dtype=self.data.dtype)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if node._parents:
                    node.grad = None if node is not self else node.grad

    # -- basic properties ----------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # -- elementwise arithmetic ----------------------------------------
    def __add__(self, other):
        other = _lift(other, self.dtype)
        a, b = self, other

        def bw(g):
            a._accum(_unbroadcast(g, a.shape))
            b._accum(_unbroadcast(g, b.shape))

        return Tensor._make(a.data + b.data, (a, b), bw)

    __radd__ = __add__

    def __neg__(self):
        a = self
        return Tensor._make(-a.data, (a,), lambda g: a._accum(-g))

    def __sub__(self, other):
        return self + (-_lift(other, self.dtype))

    def __rsub__(self, other):
        return _lift(other, self.dtype) + (-self)

    def __mul__(self, other):
        other = _lift(other, self.dtype)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g * b.data, a.shape), owned=True)
            if b.requires_grad:
                b._accum(_unbroadcast(g * a.data, b.shape), owned=True)

        return Tensor._make(a.data * b.data, (a, b), bw)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return self * other.reciprocal()
        return self * (1.0 / other)

    def reciprocal(self):
        a = self
        out = 1.0 / a.data
        return Tensor._make(out, (a,), lambda g: a._accum(-g * out * out))

    def square(self):
        a = self
        return Tensor._make(a.data * a.data, (a,), lambda g: a._accum(2.0 * g * a.data))

    # -- linear algebra -------------------------------------------------
    def __matmul__(self, other):
        other = _lift(other, self.dtype)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                if a.ndim == 2 and b.ndim == g.ndim > 2:
                    # shared left matrix: fold the batch axes into one product
                    gm = np.moveaxis(g, -2, 0).reshape(g.shape[-2], -1)
                    bm = np.moveaxis(b.data, -2, 0).reshape(b.shape[-2], -1)
                    a._accum(gm @ bm.T, owned=True)
                else:
                    a._accum(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape), owned=True)
            if b.requires_grad:
                if b.ndim == 2 and a.ndim > 2:
                    b._accum(a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1]), owned=True)
                elif a.ndim >= 2:
                    b._accum(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape), owned=True)
                else:
                    b._accum(_unbroadcast(np.outer(a.data, g), b.shape))

        return Tensor._make(a.data @ b.data, (a, b), bw)

    def __rmatmul__(self, other):
        return _lift(other, self.dtype) @ self

    # -- reductions -----------------------------------------------------
    def sum(self, axis=None, keepdims: bool = False):
        a = self

        def bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a._accum(np.broadcast_to(g, a.shape))

        return Tensor._make(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw)

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else np.prod([self.shape[i] for i in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    # -- shape manipulation ---------------------------------------------
    def reshape(self, *shape):
        a = self
        shape = shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape
        return Tensor._make(a.data.reshape(shape), (a,), lambda g: a._accum(g.reshape(a.shape)))

    def transpose(self, *axes):
        a = self
        axes = axes[0] if len(axes) == 1 and isinstance(axes[0], (tuple, list)) else axes
        inv = np.argsort(axes)
        return Tensor._make(a.data.transpose(axes), (a,), lambda g: a._accum(g.transpose(inv)))

    def swapaxes(self, i, j):
        axes = list(range(self.ndim))
        axes[i], axes[j] = axes[j], axes[i]
        return self.transpose(axes)

    def __getitem__(self, idx):
        a = self
        basic = _is_basic_index(idx)

        def bw(g):
            full = np.zeros_like(a.data)
            if basic:
                full[idx] += g
            else:
                np.add.at(full, idx, g)
            a._accum(full)

        return Tensor._make(a.data[idx], (a,), bw)

    # -- nonlinearities -------------------------------------------------
    def tanh(self):
        a = self
        out = np.tanh(a.data)
        return Tensor._make(out, (a,), lambda g: a._accum(g * (1.0 - out * out)))

    def gelu(self):
        """Tanh approximation of GELU with its exact derivative."""
        a = self
        x = a.data
        c = math.sqrt(2.0 / math.pi)
        x2 = x * x
        t = np.tanh(c * x * (1.0 + 0.044715 * x2))
        out = 0.5 * x * (1.0 + t)

        def bw(g):
            dinner = c * (1.0 + 3 * 0.044715 * x2)
            a._accum(g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner), owned=True)

        return Tensor._make(out, (a,), bw)

    def softmax(self, axis: int = -1, mask=None):
        """Softmax along ``axis``; entries where ``mask`` is False get zero weight."""
        a = self
        x = a.data
        if mask is not None:
            x = np.where(mask, x, -np.inf)
        m = np.max(x, axis=axis, keepdims=True)
        m = np.where(np.isfinite(m), m, 0.0)
        e = np.exp(x - m)
        s = e.sum(axis=axis, keepdims=True)
        out = e / np.where(s > 0, s, 1.0)

        def bw(g):
            dot = (g * out).sum(axis=axis, keepdims=True)
            a._accum(out * (g - dot), owned=True)

        return Tensor._make(out.astype(a.dtype, copy=False), (a,), bw)

    def layernorm(self, gamma, beta, eps: float = 1e-5):
        """Normalise the last axis, then scale and shift."""
        a = self
        x = a.data
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv
        out = xhat * gamma.data + beta.data
        n = x.shape[-1]

        def bw(g):
            if gamma.requires_grad:
                gamma._accum(_unbroadcast(g * xhat, gamma.shape))
            if beta.requires_grad:
                beta._accum(_unbroadcast(g, beta.shape))
            if a.requires_grad:
                gx = g * gamma.data
                a._accum(inv / n * (n * gx - gx.sum(-1, keepdims=True) - xhat * (gx * xhat).sum(-1, keepdims=True)), owned=True)

        return Tensor._make(out, (a, gamma, beta), bw)


def _is_basic_index(idx) -> bool:
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (int, slice)) or p is None or p is Ellipsis for p in parts)


def _lift(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            t._accum(piece)

    return Tensor._make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw)


def take_rows(table: Tensor, ids) -> Tensor:
    """Embedding lookup ``table[ids]`` with scatter-add backward."""
    ids = np.asarray(ids)

    def bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        table._accum(full)

    return Tensor._make(table.data[ids], (table,), bw)


def mse(pred: Tensor, target) -> Tensor:
    diff = pred - target
    return diff.square().mean()
