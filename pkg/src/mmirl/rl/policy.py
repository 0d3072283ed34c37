"""Context-conditioned tanh-squashed Gaussian policy and value network."""

from __future__ import annotations

import math

import numpy as np

from ..numeric import LOG_STD_MAX, LOG_STD_MIN, Mlp, ParamBlock, clamp_log_std, gaussian_log_prob, mlp_shapes
from ..numeric.nn import gaussian_entropy

_SQUASH_EPS = 1e-6


def one_hot(z, n):
    z = np.asarray(z, dtype=int)
    out = np.zeros(z.shape + (n,))
    np.put_along_axis(out, z[..., None], 1.0, axis=-1)
    return out


def augment(obs, z, n_contexts):
    """Append the one-hot context to every observation row: <x, z>."""
    obs = np.asarray(obs, dtype=float)
    z = np.broadcast_to(np.asarray(z, dtype=int), obs.shape[:-1])
    return np.concatenate([obs, one_hot(z, n_contexts)], axis=-1)


def _log1m_tanh2(x):
    # log(1 - tanh(x)^2), stable for large |x|
    return 2.0 * (math.log(2.0) - x - np.logaddexp(0.0, -2.0 * x))


class GaussianPolicy:
    """pi(u | x, z): Gaussian over a pre-squash variable, tanh-mapped to bounds.

    The parameter block holds the mean network followed by a (1, action_dim)
    log standard deviation row.
    """

    def __init__(self, obs_dim, action_dim, low, high, hidden=(64, 64), log_std_init=-0.5,
                 rng=None, block=None):
        self.widths = [int(obs_dim), *[int(h) for h in hidden], int(action_dim)]
        self.action_dim = int(action_dim)
        self.low = np.asarray(low, dtype=float)
        self.high = np.asarray(high, dtype=float)
        shapes = mlp_shapes(self.widths) + [(1, self.action_dim)]
        if block is None:
            block = ParamBlock(shapes)
            self.block = block
            self.mean_net = Mlp(self.widths, block)
            self.mean_net.init(rng if rng is not None else np.random.default_rng(0), out_scale=0.01)
            self.log_std_values[:] = log_std_init
        else:
            if block.shapes != shapes:
                raise ValueError(f"policy block shape table {block.shapes} != expected {shapes}")
            self.block = block
            self.mean_net = Mlp(self.widths, block)
        self._log_std_index = self.mean_net.n_tensors

    @property
    def obs_dim(self):
        return self.widths[0]

    @property
    def log_std_values(self):
        return self.block.values[-self.action_dim:]

    @property
    def log_std(self):
        return self.log_std_values.copy()

    def clamp(self):
        clamp_log_std(self.log_std_values)

    # -- squashing ---------------------------------------------------------
    def squash(self, pre):
        return self.low + 0.5 * (np.tanh(pre) + 1.0) * (self.high - self.low)

    def unsquash(self, action):
        unit = 2.0 * (np.asarray(action, dtype=float) - self.low) / (self.high - self.low) - 1.0
        return np.arctanh(np.clip(unit, -1.0 + _SQUASH_EPS, 1.0 - _SQUASH_EPS))

    def squash_correction(self, pre):
        """log |d action / d pre| summed over action dims."""
        half_range = np.log(0.5 * (self.high - self.low)).sum()
        return _log1m_tanh2(pre).sum(axis=-1) + half_range

    # -- evaluation ---------------------------------------------------------
    def mean(self, obs_aug):
        return self.mean_net.predict(obs_aug)

    def act(self, obs_aug, rng, deterministic=False):
        """Returns (action, pre_squash, log_prob) for a batch of augmented observations."""
        mean = self.mean_net.predict(obs_aug)
        log_std = self.log_std
        if deterministic:
            pre = mean
        else:
            pre = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
        logp = gaussian_log_prob(mean, log_std, pre) - self.squash_correction(pre)
        return self.squash(pre), pre, logp

    def log_prob(self, obs_aug, action):
        """log pi(action | obs_aug) in action units (untaped)."""
        pre = self.unsquash(action)
        return self.log_prob_pre(obs_aug, pre)

    def log_prob_pre(self, obs_aug, pre):
        mean = self.mean_net.predict(obs_aug)
        return gaussian_log_prob(mean, self.log_std, pre) - self.squash_correction(pre)

    def taped_log_prob_pre(self, obs_aug, pre):
        """Taped Gaussian part of log pi; the squash term depends on ``pre`` only."""
        mean = self.mean_net.forward(obs_aug)
        log_std = self.block.view(self._log_std_index)
        return gaussian_log_prob(mean, log_std, pre), log_std

    def entropy(self):
        return float(gaussian_entropy(self.log_std))

    def copy(self):
        return GaussianPolicy(self.obs_dim, self.action_dim, self.low, self.high,
                              hidden=self.widths[1:-1], block=self.block.copy())


__all__ = ["GaussianPolicy", "LOG_STD_MAX", "LOG_STD_MIN", "augment", "one_hot"]
