from __future__ import annotations

import numpy as np


class AdamState:
    """First/second moment buffers and the step counter for one ParamBlock."""

    def __init__(self, n):
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0
        self.skipped = 0

    def copy(self):
        out = AdamState(self.m.size)
        out.m[:] = self.m
        out.v[:] = self.v
        out.t = self.t
        out.skipped = self.skipped
        return out


def adam_step(block, state, lr=3e-4, betas=(0.9, 0.999), eps=1e-8):
    """Bias-corrected Adam update of ``block.values`` from ``block.grads``.

    Returns False (and leaves values and moments untouched) when any gradient
    entry is non-finite.
    """
    g = block.grads
    if not np.all(np.isfinite(g)):
        state.skipped += 1
        return False
    b1, b2 = betas
    state.t += 1
    state.m *= b1
    state.m += (1.0 - b1) * g
    state.v *= b2
    state.v += (1.0 - b2) * g * g
    m_hat = state.m / (1.0 - b1 ** state.t)
    v_hat = state.v / (1.0 - b2 ** state.t)
    block.values -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return True


def clip_grad_norm(block, max_norm):
    norm = float(np.sqrt(np.dot(block.grads, block.grads)))
    if np.isfinite(norm) and norm > max_norm > 0:
        block.grads *= max_norm / norm
    return norm


class Adam:
    def __init__(self, block, lr=3e-4, betas=(0.9, 0.999), eps=1e-8, max_grad_norm=None):
        self.block = block
        self.lr = lr
        self.betas = tuple(betas)
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.state = AdamState(len(block))

    def zero_grad(self):
        self.block.zero_grads()

    def step(self):
        if self.max_grad_norm:
            clip_grad_norm(self.block, self.max_grad_norm)
        return adam_step(self.block, self.state, self.lr, self.betas, self.eps)
