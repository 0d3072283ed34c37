"""Minimal reverse-mode automatic differentiation over numpy arrays.

A :class:`Var` wraps an ndarray and remembers the operation that produced it.
Calling :func:`backward` on a scalar ``Var`` walks the recorded graph in
reverse topological order and accumulates gradients into every leaf that
requires them. Parameter leaves created by :meth:`ParamBlock.view` write their
gradients straight into the block's flat gradient buffer.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "AutodiffError",
    "Var",
    "as_var",
    "backward",
    "concat",
    "exp",
    "log",
    "log_softmax",
    "minimum",
    "clip",
    "softplus",
    "tanh",
    "square",
]


class AutodiffError(RuntimeError):
    """Raised for misuse of the tape (bad shapes, repeated backward, ...)."""


def _unbroadcast(grad, shape):
    # Sum out axes that numpy broadcasting added or stretched.
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Var:
    __slots__ = ("value", "grad", "parents", "_backward", "requires_grad", "_sink", "_freed")
    __array_priority__ = 1000

    def __init__(self, value, parents=(), backward_fn=None, requires_grad=None, sink=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = tuple(parents)
        self._backward = backward_fn
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in self.parents)
        self.requires_grad = requires_grad
        self.grad = None
        # sink: external buffer (a view into a ParamBlock's grads) for leaves
        self._sink = sink
        self._freed = False

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Var(shape={self.value.shape}, requires_grad={self.requires_grad})"

    # -- elementary arithmetic -------------------------------------------
    def __add__(self, other):
        other = as_var(other)
        out = self.value + other.value

        def bw(g):
            return _unbroadcast(g, self.shape), _unbroadcast(g, other.shape)

        return Var(out, (self, other), bw)

    __radd__ = __add__

    def __sub__(self, other):
        other = as_var(other)
        out = self.value - other.value

        def bw(g):
            return _unbroadcast(g, self.shape), _unbroadcast(-g, other.shape)

        return Var(out, (self, other), bw)

    def __rsub__(self, other):
        return as_var(other) - self

    def __mul__(self, other):
        other = as_var(other)
        a, b = self.value, other.value

        def bw(g):
            return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)

        return Var(a * b, (self, other), bw)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_var(other)
        a, b = self.value, other.value

        def bw(g):
            return _unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)

        return Var(a / b, (self, other), bw)

    def __rtruediv__(self, other):
        return as_var(other) / self

    def __neg__(self):
        return Var(-self.value, (self,), lambda g: (-g,))

    def __matmul__(self, other):
        other = as_var(other)
        a, b = self.value, other.value
        if a.ndim != 2 or b.ndim != 2:
            raise AutodiffError("matmul supports 2-D operands only")
        if a.shape[1] != b.shape[0]:
            raise AutodiffError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

        def bw(g):
            return g @ b.T, a.T @ g

        return Var(a @ b, (self, other), bw)

    def __getitem__(self, idx):
        shape = self.shape

        def bw(g):
            full = np.zeros(shape)
            np.add.at(full, idx, g)
            return (full,)

        return Var(self.value[idx], (self,), bw)

    # -- reductions and reshaping ----------------------------------------
    def sum(self, axis=None, keepdims=False):
        shape = self.shape

        def bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Var(self.value.sum(axis=axis, keepdims=keepdims), (self,), bw)

    def mean(self, axis=None, keepdims=False):
        n = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        old = self.shape
        return Var(self.value.reshape(*shape), (self,), lambda g: (g.reshape(old),))

    @property
    def T(self):
        return Var(self.value.T, (self,), lambda g: (g.T,))


def as_var(x):
    return x if isinstance(x, Var) else Var(x, requires_grad=False)


def tanh(x):
    x = as_var(x)
    out = np.tanh(x.value)
    return Var(out, (x,), lambda g: (g * (1.0 - out * out),))


def exp(x):
    x = as_var(x)
    out = np.exp(x.value)
    return Var(out, (x,), lambda g: (g * out,))


def log(x):
    x = as_var(x)
    v = x.value
    return Var(np.log(v), (x,), lambda g: (g / v,))


def square(x):
    x = as_var(x)
    v = x.value
    return Var(v * v, (x,), lambda g: (2.0 * g * v,))


def softplus(x):
    """log(1 + exp(x)), stable for large |x|."""
    x = as_var(x)
    v = x.value
    out = np.logaddexp(0.0, v)
    sig = 0.5 * (1.0 + np.tanh(0.5 * v))
    return Var(out, (x,), lambda g: (g * sig,))


def log_softmax(x, axis=-1):
    x = as_var(x)
    v = x.value
    shifted = v - v.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def bw(g):
        return (g - soft * g.sum(axis=axis, keepdims=True),)

    return Var(out, (x,), bw)


def minimum(a, b):
    a, b = as_var(a), as_var(b)
    pick_a = a.value <= b.value

    def bw(g):
        return (_unbroadcast(np.where(pick_a, g, 0.0), a.shape),
                _unbroadcast(np.where(pick_a, 0.0, g), b.shape))

    return Var(np.minimum(a.value, b.value), (a, b), bw)


def clip(x, lo, hi):
    x = as_var(x)
    v = x.value
    inside = (v >= lo) & (v <= hi)
    return Var(np.clip(v, lo, hi), (x,), lambda g: (np.where(inside, g, 0.0),))


def concat(parts, axis=-1):
    parts = [as_var(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return Var(np.concatenate([p.value for p in parts], axis=axis), parts, bw)


def _toposort(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss):
    """Accumulate d(loss)/d(leaf) for every leaf reachable from ``loss``.

    ``loss`` must be a scalar :class:`Var` produced by recorded operations.
    The graph is released afterwards; a second call on it raises.
    """
    if not isinstance(loss, Var):
        raise AutodiffError("backward() needs a Var returned by a recorded forward pass")
    if loss.value.size != 1:
        raise AutodiffError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if loss._freed:
        raise AutodiffError("graph already consumed by a previous backward()")
    if not loss.requires_grad:
        # constant in every parameter: nothing to accumulate
        loss._freed = True
        return
    order = _toposort(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        g = node.grad
        if g is None:
            continue
        if node._sink is not None:
            node._sink += g.reshape(node._sink.shape)
        if node._backward is not None:
            grads = node._backward(g)
            for parent, pg in zip(node.parents, grads):
                if not parent.requires_grad:
                    continue
                parent.grad = pg if parent.grad is None else parent.grad + pg
        # release intermediate buffers
        node.grad = None
        node._backward = None
        node._freed = True
