"""PI temperature controller for the CSTR, with conditional-integration anti-windup."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ..envs.cstr import CstrEnv, CstrParams

# Frozen result of tune_pi() on the default calibrated reactor (noise-free
# mode-0 step, IAE criterion); see tests/test_experts.py.
DEFAULT_KC = 20.0
DEFAULT_TAU_I = 200.0


@dataclass
class PiController:
    kc: float = DEFAULT_KC
    tau_i: float = DEFAULT_TAU_I
    u0: float = 50.0
    integral: np.ndarray = field(default_factory=lambda: np.zeros(1))
    low: float = 0.0
    high: float = 100.0

    def reset(self, n=1):
        self.integral = np.zeros(int(n))


def pi_control(ctrl, error, dt):
    """Valve opening for tracking error ``error = T - T_set`` (positive opens the valve).

    The integral includes the current error unless the output would then
    saturate in the direction the error pushes it.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    error = np.asarray(error, dtype=float)
    integral = np.broadcast_to(ctrl.integral, error.shape).astype(float)
    ki = 0.0 if math.isinf(ctrl.tau_i) else ctrl.kc / ctrl.tau_i
    trial = integral + error * dt
    raw = ctrl.u0 + ctrl.kc * error + ki * trial
    blocked = ((raw > ctrl.high) & (error > 0)) | ((raw < ctrl.low) & (error < 0))
    ctrl.integral = np.where(blocked, integral, trial)
    out = ctrl.u0 + ctrl.kc * error + ki * ctrl.integral
    return np.clip(out, ctrl.low, ctrl.high)


class PiExpert:
    """Drives a :class:`CstrEnv` batch; reads the error channel of the raw observation."""

    kind = "pi"

    def __init__(self, kc=DEFAULT_KC, tau_i=DEFAULT_TAU_I, u0=None):
        self.kc, self.tau_i, self.u0 = kc, tau_i, u0
        self.ctrl = None

    def reset(self, env):
        u0 = env.params.nominal_valve if self.u0 is None else self.u0
        self.ctrl = PiController(self.kc, self.tau_i, u0)
        self.ctrl.reset(env.n_envs)

    def act(self, env, rng=None):
        error = -env.raw_observation()[:, 4]
        return pi_control(self.ctrl, error, env.spec.dt)[:, None]


def closed_loop(params, kc, tau_i, modes=(0,), noise=False, seed=0):
    """Closed-loop PI run from the nominal state; returns (T, valve, setpoint) arrays (n, horizon)."""
    if not noise:
        params = CstrParams(**{**params.__dict__, "noise_frac": 0.0, "t_jitter": 0.0})
    env = CstrEnv(params, seed=seed)
    expert = PiExpert(kc, tau_i)
    env.reset(np.asarray(modes))
    expert.reset(env)
    temps, valves = [], []
    for _ in range(params.horizon):
        u = expert.act(env)
        env.step(u)
        temps.append(env.state.temperature.copy())
        valves.append(env.state.b.copy())
    return np.stack(temps, 1), np.stack(valves, 1), env.state.setpoint.copy()


def step_metrics(temps, setpoint, start, dt, band=0.5):
    """Overshoot fraction, settling time (s) into +-band, and mean offset over the final 50 steps."""
    temps = np.atleast_2d(temps)
    setpoint = np.atleast_1d(setpoint)[:, None]
    step = setpoint - start
    over = np.max((temps - setpoint) * np.sign(step), axis=1) / np.abs(step[:, 0])
    outside = np.abs(temps - setpoint) > band
    last = np.where(outside.any(axis=1), temps.shape[1] - np.argmax(outside[:, ::-1], axis=1), 0)
    settle = last * dt
    offset = np.mean(temps[:, -50:] - setpoint, axis=1)
    return np.maximum(over, 0.0), settle, offset


def tune_pi(params=CstrParams(), kc_grid=(1, 2, 4, 6, 8, 10, 15, 20),
            tau_grid=(50, 75, 100, 150, 200, 300, 500)):
    """Coarse grid search on the integral of |T - T_set| (noise-free mode-0 step)."""
    best = None
    for kc, tau in itertools.product(kc_grid, tau_grid):
        temps, _, sp = closed_loop(params, kc, tau, modes=(0,))
        iae = float(np.sum(np.abs(temps - sp[:, None])) * params.dt)
        if not np.isfinite(iae):
            continue
        if best is None or iae < best[2]:
            best = (float(kc), float(tau), iae)
    return best
