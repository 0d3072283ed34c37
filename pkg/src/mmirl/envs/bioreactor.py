"""Fed-batch photo-production bioreactor with a mode-dependent product sink.

    dy1/dt = -(u1 + 0.5 u1^2) y1 + u2
    dy2/dt = u1 y1 - k u2 y1

over a batch normalised to unit time, split into ``horizon`` control steps.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .base import EnvSpec, EpisodeFinished, Normalizer, ProcessEnv, rk4


@dataclass(frozen=True)
class BioreactorParams:
    k_values: tuple = (0.5, 0.7)
    horizon: int = 20
    t_final: float = 1.0
    substeps: int = 10
    u_max: float = 5.0
    move_penalty: float = 0.01
    y1_init: float = 1.0
    y2_init: float = 0.0
    y1_jitter: float = 0.02
    obs_center: tuple = (0.0, 0.0)
    obs_scale: tuple = (1.0, 1.0)

    @property
    def dt(self):
        return self.t_final / self.horizon


@dataclass
class BioreactorState:
    y: np.ndarray  # (..., 2): reactant y1, product y2
    t_index: int
    u_prev: np.ndarray  # (..., 2)

    @property
    def y1(self):
        return self.y[..., 0]

    @property
    def y2(self):
        return self.y[..., 1]


def bioreactor_rhs(y, u, k):
    y1, y2 = y[..., 0], y[..., 1]
    u1, u2 = u[..., 0], u[..., 1]
    return np.stack([-(u1 + 0.5 * u1 * u1) * y1 + u2, u1 * y1 - k * u2 * y1], axis=-1)


def move_cost(u, u_prev, weight=0.01):
    return -weight * np.abs(np.asarray(u) - np.asarray(u_prev)).sum(axis=-1)


def bioreactor_step(state, action, mode, params=BioreactorParams()):
    """Advance one control interval; returns (new_state, reward, done).

    The move penalty starts at the second step (the first action has no
    predecessor), and the terminal step adds the final product concentration.
    """
    if state.t_index >= params.horizon:
        raise EpisodeFinished(f"bioreactor episode already finished ({params.horizon} steps)")
    u = np.clip(np.asarray(action, dtype=float), 0.0, params.u_max)
    k = np.asarray(params.k_values, dtype=float)[np.asarray(mode, dtype=int)]
    y = rk4(bioreactor_rhs, state.y, params.dt, params.substeps, u, k)
    if state.t_index == 0:
        reward = np.zeros(u.shape[:-1])
    else:
        reward = move_cost(u, state.u_prev, params.move_penalty)
    t = state.t_index + 1
    done = t >= params.horizon
    if done:
        reward = reward + y[..., 1]
    return BioreactorState(y=y, t_index=t, u_prev=u), reward, done


class BioreactorEnv(ProcessEnv):
    env_id = "bioreactor"

    def __init__(self, params=BioreactorParams(), seed=None, worker=0):
        self.params = params
        self.spec = EnvSpec(
            state_dim=2, action_dim=2,
            action_low=(0.0, 0.0), action_high=(params.u_max, params.u_max),
            horizon=params.horizon, n_modes=len(params.k_values), dt=params.dt,
        )
        self.normalizer = Normalizer(params.obs_center, params.obs_scale)
        super().__init__(seed, worker)

    def with_params(self, **changes):
        return BioreactorEnv(replace(self.params, **changes))

    def _reset(self, modes):
        n = modes.size
        y = np.empty((n, 2))
        y[:, 0] = self.params.y1_init
        y[:, 1] = self.params.y2_init
        if self.params.y1_jitter > 0:
            y[:, 0] += self.rng.uniform(-self.params.y1_jitter, self.params.y1_jitter, n)
        return BioreactorState(y=y, t_index=0, u_prev=np.zeros((n, 2)))

    def _step(self, state, action):
        new, reward, _ = bioreactor_step(state, action, self.modes, self.params)
        return new, reward

    def raw_observation(self):
        return self.state.y.copy()

    def _finite_rows(self, state):
        return np.all(np.isfinite(state.y), axis=-1)

    def _restore_rows(self, new, prev, mask):
        y = new.y.copy()
        y[mask] = prev.y[mask]
        return BioreactorState(y=y, t_index=new.t_index, u_prev=new.u_prev)

    def terminal_metric(self):
        """Terminal product concentration y2(T)."""
        return self.state.y[:, 1].copy()

    def mode_labels(self):
        return [f"k={k:g}" for k in self.params.k_values]
