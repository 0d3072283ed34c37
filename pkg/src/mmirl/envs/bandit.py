"""One-state contextual bandit: the mode fixes the sign of the target action."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import EnvSpec, Normalizer, ProcessEnv


@dataclass(frozen=True)
class BanditParams:
    targets: tuple = (0.5, -0.5)
    horizon: int = 4
    bound: float = 1.0


@dataclass
class BanditState:
    t_index: int
    n: int


class ContextualBandit(ProcessEnv):
    env_id = "bandit"

    def __init__(self, params=BanditParams(), seed=None, worker=0):
        self.params = params
        b = params.bound
        self.spec = EnvSpec(state_dim=1, action_dim=1, action_low=(-b,), action_high=(b,),
                            horizon=params.horizon, n_modes=len(params.targets), dt=1.0)
        self.normalizer = Normalizer((0.0,), (1.0,))
        super().__init__(seed, worker)

    def _reset(self, modes):
        return BanditState(t_index=0, n=modes.size)

    def _step(self, state, action):
        target = np.asarray(self.params.targets)[self.modes]
        reward = -(action[:, 0] - target) ** 2
        return BanditState(t_index=state.t_index + 1, n=state.n), reward

    def raw_observation(self):
        return np.ones((self.state.n, 1))

    def _finite_rows(self, state):
        return np.ones(state.n, dtype=bool)

    def _restore_rows(self, new, prev, mask):
        return new

    def terminal_metric(self):
        return np.zeros(self.state.n)


class BanditExpert:
    """Gaussian around the mode's target action, clipped to the bounds."""

    kind = "bandit-gaussian"

    def __init__(self, std=0.1):
        self.std = std

    def reset(self, env):
        pass

    def act(self, env, rng):
        target = np.asarray(env.params.targets)[env.modes]
        return (target + self.std * rng.standard_normal(target.shape))[:, None]
