"""Proximal-clip policy gradient solver used as the inner "forward" RL loop."""

from __future__ import annotations

import logging
import time

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .._state import jsonable_params, load_blocks, pack_optimizers, rng_state, set_rng_state, unpack_optimizers
from ..numeric import Adam, Mlp, backward
from ..numeric.autodiff import clip, exp, minimum, square
from ..numeric.nn import gaussian_entropy
from .gae import gae
from .policy import GaussianPolicy, augment
from .rollout import collect_rollouts

log = logging.getLogger(__name__)


class PolicyAgent:
    """Policy + value network pair with their optimisers and solver settings."""

    def __init__(self, state_dim, n_contexts, low, high, hidden=(64, 64), lr=3e-4, value_lr=1e-3,
                 gamma=0.99, gae_lambda=0.95, clip_ratio=0.2, ent_coef=0.0, epochs=10,
                 minibatch_size=256, target_kl=0.02, max_grad_norm=0.5, log_std_init=-0.5, seed=0):
        if not 0.0 < gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
        if not 0.0 < clip_ratio < 1.0:
            raise ValueError(f"clip ratio must lie in (0, 1), got {clip_ratio}")
        self.state_dim = int(state_dim)
        self.n_contexts = int(n_contexts)
        self.rng = np.random.default_rng(seed)
        obs_dim = self.state_dim + self.n_contexts
        self.policy = GaussianPolicy(obs_dim, len(np.atleast_1d(low)), low, high, hidden,
                                     log_std_init=log_std_init, rng=self.rng)
        self.value = Mlp([obs_dim, *hidden, 1]).init(self.rng, out_scale=1.0)
        self.policy_opt = Adam(self.policy.block, lr=lr, max_grad_norm=max_grad_norm)
        self.value_opt = Adam(self.value.block, lr=value_lr, max_grad_norm=max_grad_norm)
        self.gamma = gamma
        self.gae_lambda = gae_lambda
        self.clip_ratio = clip_ratio
        self.ent_coef = ent_coef
        self.epochs = epochs
        self.minibatch_size = minibatch_size
        self.target_kl = target_kl

    @property
    def blocks(self):
        return {"policy": self.policy.block, "value": self.value.block}

    @property
    def optimizers(self):
        return {"policy": self.policy_opt, "value": self.value_opt}

    def act(self, obs, z, rng=None, deterministic=False):
        obs_aug = augment(obs, z, self.n_contexts)
        return self.policy.act(obs_aug, self.rng if rng is None else rng, deterministic)[0]

    def log_prob(self, obs, z, action):
        return self.policy.log_prob(augment(obs, z, self.n_contexts), action)


def compute_advantages(agent, batch):
    obs_aug = batch.obs_aug()
    E, T = batch.obs.shape[:2]
    values = agent.value.predict(obs_aug.reshape(E * T, -1)).reshape(E, T)
    adv, ret = gae(batch.rewards, values, agent.gamma, agent.gae_lambda, last_value=0.0)
    std = adv.std()
    batch.values = values
    batch.advantages = (adv - adv.mean()) / (std + 1e-8)
    batch.returns = ret
    return batch


def policy_update(agent, batch, epochs=None, minibatch_size=None):
    """Clipped-surrogate ascent plus value regression on one batch."""
    if batch.advantages is None:
        compute_advantages(agent, batch)
    epochs = agent.epochs if epochs is None else epochs
    mb = agent.minibatch_size if minibatch_size is None else minibatch_size
    pol = agent.policy
    n = batch.n_steps
    obs_aug = batch.obs_aug().reshape(n, -1)
    pre = batch.pre.reshape(n, -1)
    # the squash term is a function of the stored sample only
    gauss_old = batch.log_probs.reshape(n) + pol.squash_correction(pre)
    adv = batch.advantages.reshape(n)
    ret = batch.returns.reshape(n)
    c = agent.clip_ratio
    stats = {"kl": 0.0, "clip_frac": 0.0, "epochs_run": 0, "aborted": False}
    clip_hits, seen = 0, 0
    for epoch in range(epochs):
        perm = agent.rng.permutation(n)
        for start in range(0, n, mb):
            idx = perm[start:start + mb]
            pol.block.zero_grads()
            logp, log_std = pol.taped_log_prob_pre(obs_aug[idx], pre[idx])
            ratio = exp(logp - gauss_old[idx])
            a = adv[idx]
            surr = minimum(ratio * a, clip(ratio, 1.0 - c, 1.0 + c) * a)
            loss = -surr.mean()
            if agent.ent_coef:
                loss = loss - gaussian_entropy(log_std) * agent.ent_coef
            backward(loss)
            agent.policy_opt.step()
            pol.clamp()
            r = ratio.value
            clip_hits += int(np.count_nonzero(np.abs(r - 1.0) > c))
            seen += r.size

            agent.value.block.zero_grads()
            v = agent.value.forward(obs_aug[idx]).reshape(-1)
            vloss = square(v - ret[idx]).mean()
            backward(vloss)
            agent.value_opt.step()
        new = pol.log_prob_pre(obs_aug, pre) + pol.squash_correction(pre)
        log_r = new - gauss_old
        kl = float(np.mean(np.expm1(log_r) - log_r))
        stats["kl"] = kl
        stats["epochs_run"] = epoch + 1
        if agent.target_kl and kl > 4.0 * agent.target_kl:
            stats["aborted"] = True
            log.debug("KL %.4f exceeded 4x target after epoch %d; stopping", kl, epoch + 1)
            break
    v = agent.value.predict(obs_aug).reshape(-1)
    stats["value_loss"] = float(np.mean((v - ret) ** 2))
    stats["clip_frac"] = clip_hits / max(seen, 1)
    stats["entropy"] = pol.entropy()
    return stats


def maxent_return(trajectory_obs, trajectory_actions, reward_fn, agent, z):
    """sum_t [ reward_fn(x_t, u_t) - log pi(u_t | x_t, z) ] for one trajectory."""
    obs = np.asarray(trajectory_obs, dtype=float)
    act = np.asarray(trajectory_actions, dtype=float)
    r = np.asarray(reward_fn(obs, act), dtype=float).reshape(-1)
    logp = agent.log_prob(obs, z, act)
    return float(np.sum(r - logp))


def train_forward_rl(agent, env, n_iterations, n_episodes, reward_fn=None, z_source="mode",
                     env_modes=None, callback=None, start_iteration=0):
    """Train on the true environment reward (or ``reward_fn(batch)`` if given)."""
    history = []
    for it in range(start_iteration, start_iteration + n_iterations):
        t0 = time.perf_counter()
        batch = collect_rollouts(agent.policy, env, z_source, n_episodes=n_episodes, rng=agent.rng,
                                 env_modes=env_modes, n_contexts=agent.n_contexts)
        true_returns = batch.episode_returns()
        if reward_fn is not None:
            batch.rewards = reward_fn(batch)
        compute_advantages(agent, batch)
        stats = policy_update(agent, batch)
        rec = {
            "step": it + 1,
            "return_mean": float(true_returns.mean()),
            "return_std": float(true_returns.std()),
            "terminal_metric": float(np.mean(batch.terminal_metric)),
            "entropy": stats["entropy"],
            "kl": stats["kl"],
            "clip_frac": stats["clip_frac"],
            "value_loss": stats["value_loss"],
            "wall_time": time.perf_counter() - t0,
        }
        history.append(rec)
        if callback is not None:
            callback(rec)
    return history


class ForwardRL(BaseEstimator):
    """Context-conditioned policy trained on the true reward of an environment.

    ``fit(env)`` conditions the policy on each episode's true operating mode,
    drawn uniformly per episode, which makes it a bank of mode-specific
    experts sharing one network.
    """

    def __init__(self, hidden=(64, 64), lr=3e-4, value_lr=1e-3, gamma=0.99, gae_lambda=0.95,
                 clip_ratio=0.2, ent_coef=0.0, epochs=10, minibatch_size=256, target_kl=0.02,
                 max_grad_norm=0.5, log_std_init=-0.5, n_episodes=64, n_iterations=200, seed=0):
        self.hidden = hidden
        self.lr = lr
        self.value_lr = value_lr
        self.gamma = gamma
        self.gae_lambda = gae_lambda
        self.clip_ratio = clip_ratio
        self.ent_coef = ent_coef
        self.epochs = epochs
        self.minibatch_size = minibatch_size
        self.target_kl = target_kl
        self.max_grad_norm = max_grad_norm
        self.log_std_init = log_std_init
        self.n_episodes = n_episodes
        self.n_iterations = n_iterations
        self.seed = seed

    def _make_agent(self, env):
        return PolicyAgent(
            env.spec.state_dim, env.spec.n_modes, env.spec.low, env.spec.high, hidden=tuple(self.hidden),
            lr=self.lr, value_lr=self.value_lr, gamma=self.gamma, gae_lambda=self.gae_lambda,
            clip_ratio=self.clip_ratio, ent_coef=self.ent_coef, epochs=self.epochs,
            minibatch_size=self.minibatch_size, target_kl=self.target_kl,
            max_grad_norm=self.max_grad_norm, log_std_init=self.log_std_init, seed=self.seed,
        )

    def _start(self, env):
        self.agent_ = self._make_agent(env)
        self.env_ = env
        self.env_spec_ = env.spec
        self.history_ = []
        self.iteration_ = 0

    def fit(self, env, callback=None):
        """Train for ``n_iterations`` from scratch; ``env`` is reseeded from ``seed``."""
        self._start(env)
        env.seed(self.seed, worker=0)
        return self.partial_fit(env, self.n_iterations, callback=callback)

    def partial_fit(self, env, n_iterations=1, callback=None):
        if not hasattr(self, "agent_"):
            self._start(env)
        self.env_ = env
        hist = train_forward_rl(self.agent_, env, n_iterations, self.n_episodes, callback=callback,
                                start_iteration=self.iteration_)
        self.history_.extend(hist)
        self.iteration_ += len(hist)
        return self

    def get_state(self):
        check_is_fitted(self, "agent_")
        vectors, opt_meta = pack_optimizers(self.agent_.optimizers)
        meta = {
            "estimator": "ForwardRL",
            "params": jsonable_params(self.get_params()),
            "env_id": self.env_.env_id,
            "iteration": self.iteration_,
            "optimizers": opt_meta,
            "rng": {"agent": rng_state(self.agent_.rng), "env": rng_state(self.env_.rng)},
        }
        return self.agent_.blocks, vectors, meta

    def set_state(self, blocks, vectors, meta, env=None):
        if meta.get("estimator") != "ForwardRL":
            raise ValueError(f"checkpoint holds a {meta.get('estimator')!r}, not a ForwardRL")
        env = getattr(self, "env_", None) if env is None else env
        if env is None:
            raise ValueError("set_state needs the environment the agent acts in")
        self._start(env)
        load_blocks(self.agent_.blocks, blocks)
        unpack_optimizers(self.agent_.optimizers, vectors, meta["optimizers"])
        set_rng_state(self.agent_.rng, meta["rng"]["agent"])
        set_rng_state(env.rng, meta["rng"]["env"])
        self.iteration_ = int(meta["iteration"])
        return self

    def predict(self, obs, z):
        """Deterministic (mean) action for each observation row."""
        check_is_fitted(self, "agent_")
        return self.agent_.act(np.atleast_2d(obs), z, deterministic=True)

    def sample(self, obs, z, rng=None):
        check_is_fitted(self, "agent_")
        return self.agent_.act(np.atleast_2d(obs), z, rng=rng)

