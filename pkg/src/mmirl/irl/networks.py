"""Reward/discriminator, trajectory inference network and context prior."""

from __future__ import annotations

import numpy as np
from scipy.special import expit, logsumexp

from ..numeric import Mlp, ParamBlock, mlp_shapes
from ..numeric.autodiff import as_var, log_softmax, softplus, tanh
from ..rl.policy import one_hot


def unit_actions(actions, low, high):
    """Affine map of actions from [low, high] onto [-1, 1]."""
    low = np.asarray(low, dtype=float)
    high = np.asarray(high, dtype=float)
    return 2.0 * (np.asarray(actions, dtype=float) - low) / (high - low) - 1.0


class ContextPrior:
    """Categorical p(z); uniform unless told otherwise."""

    def __init__(self, n_contexts, probs=None):
        self.n_contexts = int(n_contexts)
        if self.n_contexts < 1:
            raise ValueError("need at least one context")
        p = np.full(self.n_contexts, 1.0 / self.n_contexts) if probs is None else np.asarray(probs, float)
        if p.shape != (self.n_contexts,) or np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"prior must be a strictly positive probability vector of length {n_contexts}")
        self.probs = p

    def log_prob(self, z):
        return np.log(self.probs)[np.asarray(z, dtype=int)]

    def entropy(self):
        return float(-(self.probs * np.log(self.probs)).sum())


class Discriminator:
    """D(x, u, z) = exp(r(x, u, z)) / (exp(r(x, u, z)) + pi(u | x, z)).

    Evaluated as sigmoid(r - log pi); ``r`` is an MLP over the normalised
    state, the action mapped to [-1, 1] and the one-hot context.
    """

    def __init__(self, state_dim, action_dim, n_contexts, low, high, hidden=(64, 64), rng=None,
                 block=None):
        self.state_dim, self.action_dim, self.n_contexts = int(state_dim), int(action_dim), int(n_contexts)
        self.low = np.asarray(low, dtype=float)
        self.high = np.asarray(high, dtype=float)
        widths = [self.state_dim + self.action_dim + self.n_contexts, *hidden, 1]
        self.net = Mlp(widths, block)
        if block is None:
            self.net.init(rng if rng is not None else np.random.default_rng(0), out_scale=0.1)

    @property
    def block(self):
        return self.net.block

    def features(self, obs, actions, z):
        obs = np.asarray(obs, dtype=float)
        z = np.broadcast_to(np.asarray(z, dtype=int), obs.shape[:-1])
        return np.concatenate([obs, unit_actions(actions, self.low, self.high), one_hot(z, self.n_contexts)],
                              axis=-1)

    def reward(self, obs, actions, z):
        """r_theta(x, u, z) for rows of (obs, actions); shape obs.shape[:-1]."""
        f = self.features(obs, actions, z)
        lead = f.shape[:-1]
        return self.net.predict(f.reshape(-1, f.shape[-1])).reshape(lead)

    def taped_reward(self, features):
        return self.net.forward(features).reshape(-1)

    def logit(self, obs, actions, z, policy_log_prob):
        return self.reward(obs, actions, z) - np.asarray(policy_log_prob, dtype=float)

    def prob(self, obs, actions, z, policy_log_prob):
        return discriminator_prob(self.reward(obs, actions, z), policy_log_prob)

    def irl_reward(self, obs, actions, z, policy_log_prob):
        """log D - log(1 - D) = r_theta - log pi."""
        return self.logit(obs, actions, z, policy_log_prob)


def discriminator_prob(reward, policy_log_prob):
    """sigmoid(r - log pi): the logistic form of exp(r) / (exp(r) + pi)."""
    return expit(np.asarray(reward, dtype=float) - np.asarray(policy_log_prob, dtype=float))


def irl_reward_from_prob(d):
    d = np.asarray(d, dtype=float)
    return np.log(d) - np.log1p(-d)


def binary_class_loss(demo_logits, gen_logits):
    """-mean_demo log D - mean_gen log(1 - D) on logits r - log pi.

    Accepts arrays (returns float) or Vars (returns a taped scalar).
    """
    if isinstance(demo_logits, np.ndarray) or np.isscalar(demo_logits):
        demo_logits = np.atleast_1d(np.asarray(demo_logits, dtype=float))
        gen_logits = np.atleast_1d(np.asarray(gen_logits, dtype=float))
        if demo_logits.size == 0 or gen_logits.size == 0:
            raise ValueError("binary_class_loss needs non-empty demo and generated batches")
        return float(np.logaddexp(0.0, -demo_logits).mean() + np.logaddexp(0.0, gen_logits).mean())
    demo_logits, gen_logits = as_var(demo_logits), as_var(gen_logits)
    if demo_logits.value.size == 0 or gen_logits.value.size == 0:
        raise ValueError("binary_class_loss needs non-empty demo and generated batches")
    return softplus(-demo_logits).mean() + softplus(gen_logits).mean()


class InferenceNet:
    """q_psi(z | tau): per-step encoder, mean pooling over time, softmax head.

    Mean pooling makes the posterior invariant to the order of the steps.
    """

    def __init__(self, state_dim, action_dim, n_contexts, low, high, hidden=(64,), features=32, rng=None,
                 block=None):
        self.state_dim, self.action_dim, self.n_contexts = int(state_dim), int(action_dim), int(n_contexts)
        self.low = np.asarray(low, dtype=float)
        self.high = np.asarray(high, dtype=float)
        self.encoder_widths = [self.state_dim + self.action_dim, *hidden, int(features)]
        self.head_widths = [int(features), self.n_contexts]
        shapes = mlp_shapes(self.encoder_widths) + mlp_shapes(self.head_widths)
        fresh = block is None
        if fresh:
            block = ParamBlock(shapes)
        elif block.shapes != shapes:
            raise ValueError(f"inference block shape table {block.shapes} != expected {shapes}")
        self.block = block
        self.encoder = Mlp(self.encoder_widths, block, first=0)
        self.head = Mlp(self.head_widths, block, first=self.encoder.n_tensors)
        if fresh:
            rng = rng if rng is not None else np.random.default_rng(0)
            self.encoder.init(rng)
            self.head.init(rng, out_scale=0.1)

    def step_features(self, obs, actions):
        return np.concatenate([np.asarray(obs, dtype=float), unit_actions(actions, self.low, self.high)], axis=-1)

    def _as_batch(self, obs, actions):
        obs = np.asarray(obs, dtype=float)
        squeeze = obs.ndim == 2
        if squeeze:
            obs, actions = obs[None], np.asarray(actions, dtype=float)[None]
        if obs.shape[1] == 0:
            raise ValueError("cannot infer a context from an empty trajectory")
        return self.step_features(obs, actions), squeeze

    def log_proba(self, obs, actions):
        """log q(. | tau) for (B, T, .) trajectories, or one (T, .) trajectory."""
        f, squeeze = self._as_batch(obs, actions)
        B, T, F = f.shape
        h = np.tanh(self.encoder.predict(f.reshape(B * T, F))).reshape(B, T, -1).mean(axis=1)
        logits = self.head.predict(h)
        out = logits - logsumexp(logits, axis=-1, keepdims=True)
        return out[0] if squeeze else out

    def proba(self, obs, actions):
        return np.exp(self.log_proba(obs, actions))

    def taped_log_proba(self, features):
        """Taped log q for a (B, T, F) feature array."""
        B, T, F = features.shape
        h = tanh(self.encoder.forward(features.reshape(B * T, F)))
        pooled = h.reshape(B, T, -1).mean(axis=1)
        return log_softmax(self.head.forward(pooled), axis=-1)


def info_objective(log_q, z, prior):
    """Sample mean of log q(z_i | tau_i) - log p(z_i).

    ``log_q`` is (B, M) posterior log-probabilities of the generated
    trajectories and ``z`` the contexts they were rolled out under.
    """
    log_q = np.asarray(log_q, dtype=float)
    z = np.asarray(z, dtype=int)
    picked = log_q[np.arange(z.size), z]
    return float(np.mean(picked - prior.log_prob(z)))


def info_terms(log_q, z, prior):
    log_q = np.asarray(log_q, dtype=float)
    z = np.asarray(z, dtype=int)
    return log_q[np.arange(z.size), z] - prior.log_prob(z)


def categorical_entropy(log_p):
    log_p = np.asarray(log_p, dtype=float)
    return -(np.exp(log_p) * log_p).sum(axis=-1)


__all__ = [
    "ContextPrior",
    "Discriminator",
    "InferenceNet",
    "binary_class_loss",
    "categorical_entropy",
    "discriminator_prob",
    "info_objective",
    "info_terms",
    "irl_reward_from_prob",
    "unit_actions",
]
