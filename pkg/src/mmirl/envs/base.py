"""Shared environment machinery: episode spec, affine normalisation, RK4."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


class EpisodeFinished(RuntimeError):
    """Raised when stepping an episode that already reached its horizon."""


class EnvAbort(RuntimeError):
    """Raised when integration produced a non-finite state."""


@dataclass(frozen=True)
class EnvSpec:
    state_dim: int
    action_dim: int
    action_low: tuple
    action_high: tuple
    horizon: int
    n_modes: int
    dt: float

    def __post_init__(self):
        lo = np.asarray(self.action_low, dtype=float)
        hi = np.asarray(self.action_high, dtype=float)
        if lo.shape != (self.action_dim,) or hi.shape != (self.action_dim,):
            raise ValueError("action bounds must have length action_dim")
        if not np.all(lo < hi):
            raise ValueError(f"action_low must be < action_high element-wise, got {lo} / {hi}")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        if self.state_dim < 1 or self.action_dim < 1:
            raise ValueError("state_dim and action_dim must be positive")

    @property
    def low(self):
        return np.asarray(self.action_low, dtype=float)

    @property
    def high(self):
        return np.asarray(self.action_high, dtype=float)


class Normalizer:
    """x -> (x - center) / scale, channel-wise."""

    def __init__(self, center, scale):
        self.center = np.asarray(center, dtype=float)
        self.scale = np.asarray(scale, dtype=float)
        if np.any(self.scale <= 0):
            raise ValueError("normalisation scales must be positive")

    def normalize(self, x):
        return (np.asarray(x, dtype=float) - self.center) / self.scale

    def denormalize(self, x):
        return np.asarray(x, dtype=float) * self.scale + self.center


def rk4(rhs, y, dt, substeps, *args):
    """Fixed-step classical Runge-Kutta over one interval of length ``dt``.

    ``rhs(y, *args)`` must be autonomous and vectorised over leading axes.
    """
    h = dt / substeps
    for _ in range(substeps):
        k1 = rhs(y, *args)
        k2 = rhs(y + 0.5 * h * k1, *args)
        k3 = rhs(y + 0.5 * h * k2, *args)
        k4 = rhs(y + h * k3, *args)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


def as_modes(modes, n, n_modes):
    modes = np.broadcast_to(np.asarray(modes, dtype=int), (n,)).copy()
    if np.any(modes < 0) or np.any(modes >= n_modes):
        raise ValueError(f"mode index out of range [0, {n_modes}): {np.unique(modes)}")
    return modes


class ProcessEnv:
    """Batched, lockstep episodes of one process.

    Subclasses implement ``_reset``, ``_step`` and ``raw_observation``; every
    batch row is an independent episode in its own operating mode. All rows
    share the step counter because every episode has a fixed horizon.
    """

    env_id = "base"
    spec: EnvSpec
    normalizer: Normalizer

    def __init__(self, seed=None, worker=0):
        self.seed(seed, worker)
        self.state = None
        self.modes = None
        self.aborted = None
        self.clip_count = 0

    def seed(self, seed=None, worker=0):
        entropy = None if seed is None else [int(seed), int(worker)]
        self.rng = np.random.default_rng(entropy)

    @property
    def n_envs(self):
        return 0 if self.modes is None else self.modes.size

    @property
    def t(self):
        return self.state.t_index

    def reset(self, modes, n=None, seed=None):
        """Start ``n`` episodes (default: one per entry of ``modes``)."""
        if seed is not None:
            self.seed(seed)
        modes = np.atleast_1d(np.asarray(modes, dtype=int))
        n = modes.size if n is None else int(n)
        self.modes = as_modes(modes, n, self.spec.n_modes)
        self.aborted = np.zeros(n, dtype=bool)
        self.state = self._reset(self.modes)
        return self.observe()

    def clip_action(self, action):
        action = np.asarray(action, dtype=float).reshape(self.n_envs, self.spec.action_dim)
        clipped = np.clip(action, self.spec.low, self.spec.high)
        self.clip_count += int(np.count_nonzero(clipped != action))
        return clipped

    def step(self, action):
        if self.state is None:
            raise EpisodeFinished("reset() must be called before step()")
        if self.state.t_index >= self.spec.horizon:
            raise EpisodeFinished(f"episode already finished after {self.spec.horizon} steps")
        action = self.clip_action(action)
        prev = self.state
        new, reward = self._step(prev, action)
        bad = ~self._finite_rows(new)
        if np.any(bad):
            log.warning("%s: non-finite state in %d episode(s) at step %d; aborting them",
                        self.env_id, int(bad.sum()), prev.t_index)
            new = self._restore_rows(new, prev, bad)
            reward = np.where(bad, 0.0, reward)
            self.aborted |= bad
        self.state = new
        done = new.t_index >= self.spec.horizon
        return self.observe(), reward, done, {"aborted": self.aborted.copy()}

    def observe(self):
        return self.normalizer.normalize(self.raw_observation())

    # subclass hooks
    def _reset(self, modes):
        raise NotImplementedError

    def _step(self, state, action):
        raise NotImplementedError

    def raw_observation(self):
        raise NotImplementedError

    def _finite_rows(self, state):
        raise NotImplementedError

    def _restore_rows(self, new, prev, mask):
        raise NotImplementedError

    def mode_labels(self):
        return [str(m) for m in range(self.spec.n_modes)]
