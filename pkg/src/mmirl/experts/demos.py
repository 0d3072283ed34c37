"""Demonstration generation: any expert, every mode, one seeded shuffle."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..io.dataset import DemoDataset, Sidecar, TrajectoryRecord
from ..rl.ppo import PolicyAgent

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DemoConfig:
    trajectories_per_mode: int = 1056
    shuffle_seed: int = 0
    rollout_seed: int = 0
    stochastic: bool = False

    def __post_init__(self):
        if self.trajectories_per_mode < 1:
            raise ValueError("trajectories_per_mode must be positive")


class PolicyExpert:
    """A trained forward-RL agent conditioned on each episode's true mode."""

    kind = "policy"

    def __init__(self, agent: PolicyAgent, stochastic=True):
        self.agent = agent
        self.stochastic = stochastic

    def reset(self, env):
        if self.agent.n_contexts != env.spec.n_modes:
            raise ValueError(f"expert knows {self.agent.n_contexts} modes, environment has {env.spec.n_modes}")

    def act(self, env, rng):
        return self.agent.act(env.observe(), env.modes, rng=rng, deterministic=not self.stochastic)


def rollout_expert(env, expert, modes, rng):
    """Raw states, actions and true rewards for one lockstep batch of episodes."""
    env.reset(modes)
    expert.reset(env)
    states, actions, rewards = [], [], []
    for _ in range(env.spec.horizon):
        states.append(env.raw_observation())
        u = np.asarray(expert.act(env, rng), dtype=float).reshape(env.n_envs, env.spec.action_dim)
        u = env.clip_action(u)
        _, r, _, info = env.step(u)
        actions.append(u)
        rewards.append(r)
    return (np.stack(states, 1), np.stack(actions, 1), np.stack(rewards, 1), env.raw_observation(),
            info["aborted"])


def _generate_mode(env, expert, mode, n, seed):
    # each mode owns its random streams, so results do not depend on worker count
    env.seed(seed, worker=mode + 1)
    env.clip_count = 0
    S, A, R, final, aborted = rollout_expert(env, expert, np.full(n, mode), np.random.default_rng([seed, mode]))
    if np.any(aborted):
        raise RuntimeError(f"{int(aborted.sum())} expert episode(s) in mode {mode} aborted")
    return S, A, R, final, env.clip_count


def generate_demos(env, expert, config=DemoConfig(), workers=1):
    """``trajectories_per_mode`` episodes per mode, shuffled with ``shuffle_seed``.

    Modes are generated independently (in ``workers`` processes if > 1).
    Out-of-bounds expert actions are clipped; the count is stored in
    ``dataset.info["clipped_actions"]``.
    """
    n, seed = config.trajectories_per_mode, config.rollout_seed
    modes = range(env.spec.n_modes)
    if workers > 1 and env.spec.n_modes > 1:
        with ProcessPoolExecutor(max_workers=min(workers, env.spec.n_modes)) as pool:
            parts = list(pool.map(_generate_mode, *zip(*[(env, expert, m, n, seed) for m in modes])))
    else:
        parts = [_generate_mode(env, expert, m, n, seed) for m in modes]
    kind = getattr(expert, "kind", type(expert).__name__)
    records = []
    for mode, (S, A, R, final, _) in zip(modes, parts):
        for i in range(n):
            records.append(TrajectoryRecord(env.env_id, S[i], A[i], Sidecar(mode, R[i], kind, final[i])))
    order = np.random.default_rng(config.shuffle_seed).permutation(len(records))
    clipped = int(sum(p[4] for p in parts))
    if clipped:
        log.warning("%d expert action component(s) were outside the bounds and clipped", clipped)
    return DemoDataset([records[i] for i in order], info={"clipped_actions": clipped, "expert_kind": kind})
