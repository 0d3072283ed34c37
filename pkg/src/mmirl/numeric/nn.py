"""Flat parameter blocks, tanh MLPs and the diagonal Gaussian policy head."""

from __future__ import annotations

import math

import numpy as np

from .autodiff import AutodiffError, Var, as_var, exp, square, tanh

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class ParamBlock:
    """A flat float64 parameter vector, its gradient buffer and a shape table.

    Every tensor of a network is a (rows, cols) window onto ``values``; the
    matching window of ``grads`` receives its gradient during backward.
    """

    def __init__(self, shapes, values=None):
        self.shapes = [tuple(int(d) for d in s) for s in shapes]
        for s in self.shapes:
            if len(s) != 2 or min(s) < 1:
                raise ValueError(f"shape-table entries must be (rows, cols) >= 1, got {s}")
        sizes = [r * c for r, c in self.shapes]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        n = int(self.offsets[-1])
        if values is None:
            self.values = np.zeros(n)
        else:
            values = np.asarray(values, dtype=np.float64)
            if values.shape != (n,):
                raise ValueError(f"values length {values.size} does not match shape table ({n})")
            self.values = values.copy()
        self.grads = np.zeros(n)

    def __len__(self):
        return self.values.size

    def __repr__(self):
        return f"ParamBlock(n={self.values.size}, shapes={self.shapes})"

    def _slice(self, i):
        return slice(self.offsets[i], self.offsets[i + 1])

    def tensor(self, i):
        return self.values[self._slice(i)].reshape(self.shapes[i])

    def grad_tensor(self, i):
        return self.grads[self._slice(i)].reshape(self.shapes[i])

    def view(self, i):
        """Leaf Var over tensor ``i`` whose gradient lands in ``grads``."""
        return Var(self.tensor(i), requires_grad=True, sink=self.grad_tensor(i))

    def zero_grads(self):
        self.grads[:] = 0.0

    def copy(self):
        out = ParamBlock(self.shapes, self.values)
        out.grads[:] = self.grads
        return out

    def load(self, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.values.shape:
            raise ValueError(f"cannot load {values.shape} into block of {self.values.shape}")
        self.values[:] = values


def mlp_shapes(widths):
    shapes = []
    for a, b in zip(widths[:-1], widths[1:]):
        shapes += [(a, b), (1, b)]
    return shapes


class Mlp:
    """tanh hidden layers, identity output.

    The network owns tensors ``first .. first + 2*(len(widths)-1)`` of
    ``block``; several networks may share one block.
    """

    def __init__(self, widths, block=None, first=0):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or min(widths) < 1:
            raise ValueError(f"need at least input and output widths >= 1, got {widths}")
        self.widths = widths
        if block is None:
            block = ParamBlock(mlp_shapes(widths))
        expected = mlp_shapes(widths)
        got = block.shapes[first:first + len(expected)]
        if got != expected:
            raise ValueError(f"block shape table {got} does not fit widths {widths}")
        self.block = block
        self.first = first
        self.n_tensors = len(expected)

    @property
    def in_dim(self):
        return self.widths[0]

    @property
    def out_dim(self):
        return self.widths[-1]

    def init(self, rng, out_scale=1.0):
        """Scaled-uniform (Glorot) weights, zero biases; last layer times ``out_scale``."""
        n_layers = len(self.widths) - 1
        for layer in range(n_layers):
            fan_in, fan_out = self.widths[layer], self.widths[layer + 1]
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            W = self.block.tensor(self.first + 2 * layer)
            W[:] = rng.uniform(-limit, limit, size=W.shape)
            if layer == n_layers - 1:
                W *= out_scale
            self.block.tensor(self.first + 2 * layer + 1)[:] = 0.0
        return self

    def _check(self, x):
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"input width {x.shape[-1]} does not match network input width {self.in_dim}")

    def forward(self, x):
        """Taped forward pass. ``x`` is (n, in) or (in,); returns a Var."""
        x = as_var(x)
        self._check(x)
        squeeze = x.ndim == 1
        if squeeze:
            x = x.reshape(1, -1)
        h = x
        n_layers = len(self.widths) - 1
        for layer in range(n_layers):
            W = self.block.view(self.first + 2 * layer)
            b = self.block.view(self.first + 2 * layer + 1)
            h = h @ W + b
            if layer < n_layers - 1:
                h = tanh(h)
        return h.reshape(-1) if squeeze else h

    __call__ = forward

    def predict(self, x):
        """Untaped forward pass on plain arrays (same arithmetic as ``forward``)."""
        x = np.asarray(x, dtype=np.float64)
        self._check(x)
        squeeze = x.ndim == 1
        h = x.reshape(1, -1) if squeeze else x
        n_layers = len(self.widths) - 1
        for layer in range(n_layers):
            h = h @ self.block.tensor(self.first + 2 * layer) + self.block.tensor(self.first + 2 * layer + 1)
            if layer < n_layers - 1:
                h = np.tanh(h)
        return h.reshape(-1) if squeeze else h


def gaussian_log_prob(mean, log_std, x):
    """Sum over the last axis of the diagonal Gaussian log density.

    Accepts Vars or arrays; returns a Var when any argument is a Var.
    """
    taped = any(isinstance(a, Var) for a in (mean, log_std, x))
    if not taped:
        mean, log_std, x = (np.asarray(a, dtype=np.float64) for a in (mean, log_std, x))
        if mean.shape[-1] != x.shape[-1]:
            raise ValueError(f"action length {x.shape[-1]} does not match mean length {mean.shape[-1]}")
        z = (x - mean) * np.exp(-log_std)
        return (-0.5 * z * z - log_std - _HALF_LOG_2PI).sum(axis=-1)
    mean, log_std, x = as_var(mean), as_var(log_std), as_var(x)
    if mean.shape[-1] != x.shape[-1]:
        raise ValueError(f"action length {x.shape[-1]} does not match mean length {mean.shape[-1]}")
    z = (x - mean) * exp(-log_std)
    return (square(z) * -0.5 - log_std - _HALF_LOG_2PI).sum(axis=-1)


def gaussian_entropy(log_std):
    """Closed-form entropy sum(log_std + 0.5 ln(2 pi e)) over the last axis."""
    if isinstance(log_std, Var):
        return (log_std + (_HALF_LOG_2PI + 0.5)).sum(axis=-1)
    return (np.asarray(log_std) + _HALF_LOG_2PI + 0.5).sum(axis=-1)


class GaussianHead:
    """Diagonal Gaussian with state-independent log standard deviation."""

    def __init__(self, mean, log_std):
        self.mean = mean
        self.log_std = log_std

    def log_prob(self, action):
        return gaussian_log_prob(self.mean, self.log_std, action)

    def entropy(self):
        return gaussian_entropy(self.log_std)

    def sample(self, rng):
        mean = self.mean.value if isinstance(self.mean, Var) else np.asarray(self.mean)
        log_std = self.log_std.value if isinstance(self.log_std, Var) else np.asarray(self.log_std)
        return mean + np.exp(log_std) * rng.standard_normal(mean.shape)


def clamp_log_std(values):
    np.clip(values, LOG_STD_MIN, LOG_STD_MAX, out=values)


__all__ = [
    "AutodiffError",
    "GaussianHead",
    "LOG_STD_MAX",
    "LOG_STD_MIN",
    "Mlp",
    "ParamBlock",
    "clamp_log_std",
    "gaussian_entropy",
    "gaussian_log_prob",
    "mlp_shapes",
]
