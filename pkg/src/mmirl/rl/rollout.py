"""Lockstep rollout collection with one fixed context per episode."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .policy import augment

log = logging.getLogger(__name__)


@dataclass
class RolloutBatch:
    """Fixed-horizon episodes stored as (episodes, steps, ...) arrays.

    ``obs`` are normalised environment observations before each action;
    the context ``z`` is one integer per episode, so it is constant within
    an episode by construction.
    """

    obs: np.ndarray
    actions: np.ndarray
    pre: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    z: np.ndarray
    env_modes: np.ndarray
    n_contexts: int
    terminal_metric: np.ndarray = None
    raw_obs: np.ndarray = None
    values: np.ndarray = None
    advantages: np.ndarray = None
    returns: np.ndarray = None
    info: dict = field(default_factory=dict)

    @property
    def n_episodes(self):
        return self.obs.shape[0]

    @property
    def horizon(self):
        return self.obs.shape[1]

    @property
    def n_steps(self):
        return self.obs.shape[0] * self.obs.shape[1]

    def obs_aug(self):
        z = np.broadcast_to(self.z[:, None], self.obs.shape[:2])
        return augment(self.obs, z, self.n_contexts)

    def episode_returns(self):
        return self.rewards.sum(axis=1)

    def z_per_step(self):
        return np.broadcast_to(self.z[:, None], self.obs.shape[:2])


def _as_source(source, n, rng, env_modes=None):
    if callable(source):
        out = source(n, rng)
    elif isinstance(source, str):
        if source != "mode":
            raise ValueError(f"unknown context source {source!r}")
        out = env_modes
    else:
        out = source
    return np.broadcast_to(np.asarray(out, dtype=int), (n,)).copy()


def collect_rollouts(policy, env, z_source, n_steps=None, n_episodes=None, rng=None,
                     env_modes=None, deterministic=False, n_contexts=None):
    """Roll out ``policy`` on ``env`` for whole episodes.

    ``z_source`` gives one context per episode: an int / array, a callable
    ``(n, rng) -> ints``, or ``"mode"`` to use each episode's environment
    mode. ``env_modes`` likewise (default: uniform random modes). At least
    ``n_steps`` transitions are collected, rounded up to whole episodes.
    """
    rng = np.random.default_rng() if rng is None else rng
    horizon = env.spec.horizon
    if n_episodes is None:
        if n_steps is None:
            raise ValueError("give n_steps or n_episodes")
        n_episodes = max(1, math.ceil(n_steps / horizon))
    n = int(n_episodes)
    if env_modes is None:
        modes = rng.integers(env.spec.n_modes, size=n)
    else:
        modes = _as_source(env_modes, n, rng)
    z = _as_source(z_source, n, rng, env_modes=modes)
    if n_contexts is None:
        n_contexts = policy.obs_dim - env.spec.state_dim
    if policy.obs_dim != env.spec.state_dim + n_contexts:
        raise ValueError(f"policy input width {policy.obs_dim} != state_dim {env.spec.state_dim} + {n_contexts}")
    if np.any(z < 0) or np.any(z >= n_contexts):
        raise ValueError("context index out of range")

    adim, sdim = env.spec.action_dim, env.spec.state_dim
    obs_buf = np.empty((n, horizon, sdim))
    raw_buf = None
    act_buf = np.empty((n, horizon, adim))
    pre_buf = np.empty((n, horizon, adim))
    logp_buf = np.empty((n, horizon))
    rew_buf = np.empty((n, horizon))

    obs = env.reset(modes)
    raw = env.raw_observation()
    raw_buf = np.empty((n, horizon, raw.shape[-1]))
    for t in range(horizon):
        obs_buf[:, t] = obs
        raw_buf[:, t] = raw
        action, pre, logp = policy.act(augment(obs, z, n_contexts), rng, deterministic=deterministic)
        act_buf[:, t] = np.clip(action, env.spec.low, env.spec.high)
        pre_buf[:, t] = pre
        logp_buf[:, t] = logp
        obs, reward, done, info = env.step(action)
        raw = env.raw_observation()
        rew_buf[:, t] = reward
    batch = RolloutBatch(
        obs=obs_buf, actions=act_buf, pre=pre_buf, log_probs=logp_buf, rewards=rew_buf,
        z=z, env_modes=modes, n_contexts=n_contexts,
        terminal_metric=env.terminal_metric(), raw_obs=raw_buf,
        info={"final_obs": obs, "final_raw_obs": raw},
    )
    aborted = info["aborted"]
    if np.any(aborted):
        log.warning("dropping %d aborted episode(s)", int(aborted.sum()))
        batch = select_episodes(batch, ~aborted)
        batch.info["dropped"] = int(aborted.sum())
    return batch


def select_episodes(batch, mask):
    def pick(a):
        return None if a is None else a[mask]

    return RolloutBatch(
        obs=batch.obs[mask], actions=batch.actions[mask], pre=batch.pre[mask],
        log_probs=batch.log_probs[mask], rewards=batch.rewards[mask], z=batch.z[mask],
        env_modes=batch.env_modes[mask], n_contexts=batch.n_contexts,
        terminal_metric=pick(batch.terminal_metric), raw_obs=pick(batch.raw_obs),
        values=pick(batch.values), advantages=pick(batch.advantages), returns=pick(batch.returns),
        info={k: (v[mask] if isinstance(v, np.ndarray) and v.shape[:1] == mask.shape else v)
              for k, v in batch.info.items()},
    )
