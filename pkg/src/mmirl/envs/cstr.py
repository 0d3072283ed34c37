"""Jacketed non-adiabatic CSTR with one irreversible exothermic reaction A -> B.

States: reactant concentration C_A (mol/L), reactor temperature T (degC) and
jacket temperature T_C (degC). The manipulated variable is the coolant valve
opening (%), which sets the coolant flow linearly. Time is in seconds.

    dC_A/dt = q (C_A0 - C_A) - k(T) C_A
    dT/dt   = q (T_0 - T) + J k(T) C_A - a (T - T_C)
    dT_C/dt = q_cmax (m/100) (T_ci - T_C) + a_c (T - T_C)
    k(T)    = k0 exp(-E_R / (T + 273.15))
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .base import EnvSpec, EpisodeFinished, Normalizer, ProcessEnv, rk4

KELVIN = 273.15


@dataclass(frozen=True)
class CstrParams:
    q: float = 1.0 / 200.0  # feed flow / volume, 1/s
    c_in: float = 1.0  # nominal inlet concentration, mol/L
    t_feed: float = 80.0
    heat_of_reaction: float = 20.0  # adiabatic rise per mol/L, K L/mol
    a_reactor: float = 0.00625  # UA / (rho Cp V), 1/s
    a_jacket: float = 0.03125  # UA / (rho_c Cp_c V_c), 1/s
    qc_max: float = 1.0 / 120.0  # coolant flow / jacket volume at full opening, 1/s
    t_coolant: float = 20.0  # calibrated: steady state T = 88 at 50 % valve
    e_over_r: float = 8000.0
    k0: float = 187702312.69702074
    setpoints: tuple = (90.0, 86.0)
    nominal_valve: float = 50.0
    nominal_state: tuple = (0.1, 88.0, 80.0)  # steady state at nominal_valve
    horizon: int = 300
    dt: float = 10.0
    substeps: int = 10
    noise_frac: float = 0.02  # std of inlet concentration noise / nominal
    t_jitter: float = 0.2
    move_penalty: float = 0.01
    obs_center: tuple = (0.1, 88.0, 80.0, 50.0, 0.0)
    obs_scale: tuple = (0.05, 4.0, 10.0, 50.0, 4.0)


@dataclass
class CstrState:
    x: np.ndarray  # (..., 3): C_A, T, T_C
    b: np.ndarray  # applied valve opening, %
    setpoint: np.ndarray
    t_index: int

    @property
    def c_a(self):
        return self.x[..., 0]

    @property
    def temperature(self):
        return self.x[..., 1]

    @property
    def jacket_temperature(self):
        return self.x[..., 2]


def cstr_rhs(x, valve, c_in, p):
    c, T, tc = x[..., 0], x[..., 1], x[..., 2]
    rate = p.k0 * np.exp(-p.e_over_r / (T + KELVIN)) * c
    qc = p.qc_max * valve / 100.0
    return np.stack([
        p.q * (c_in - c) - rate,
        p.q * (p.t_feed - T) + p.heat_of_reaction * rate - p.a_reactor * (T - tc),
        qc * (p.t_coolant - tc) + p.a_jacket * (T - tc),
    ], axis=-1)


def cstr_reward(setpoint, temperature, valve, prev_valve, move_penalty=0.01):
    return -(setpoint - temperature) ** 2 - move_penalty * (valve - prev_valve) ** 2


def cstr_step(state, valve, params=CstrParams(), rng=None):
    """One control interval under a zero-order-hold valve; (state, reward, done)."""
    if state.t_index >= params.horizon:
        raise EpisodeFinished(f"CSTR episode already finished ({params.horizon} steps)")
    valve = np.clip(np.asarray(valve, dtype=float), 0.0, 100.0)
    c_in = np.full(np.shape(state.b), params.c_in)
    if rng is not None and params.noise_frac > 0:
        c_in = c_in * (1.0 + params.noise_frac * rng.standard_normal(c_in.shape))
    x = rk4(cstr_rhs, state.x, params.dt, params.substeps, valve, c_in, params)
    reward = cstr_reward(state.setpoint, x[..., 1], valve, state.b, params.move_penalty)
    t = state.t_index + 1
    return CstrState(x=x, b=valve, setpoint=state.setpoint, t_index=t), reward, t >= params.horizon


def steady_state(params=CstrParams(), valve=None, c_in=None):
    """Open-loop steady state (C_A, T, T_C) for a constant valve opening."""
    valve = params.nominal_valve if valve is None else float(valve)
    c_in = params.c_in if c_in is None else float(c_in)
    qc = params.qc_max * valve / 100.0

    def residual(T):
        k = params.k0 * math.exp(-params.e_over_r / (T + KELVIN))
        c = params.q * c_in / (params.q + k)
        tc = (qc * params.t_coolant + params.a_jacket * T) / (qc + params.a_jacket)
        return params.q * (params.t_feed - T) + params.heat_of_reaction * k * c - params.a_reactor * (T - tc)

    grid = np.linspace(-50.0, 250.0, 3001)
    vals = np.array([residual(T) for T in grid])
    roots = [brentq(residual, grid[i], grid[i + 1], xtol=1e-13)
             for i in np.nonzero(vals[:-1] * vals[1:] < 0)[0]]
    if len(roots) != 1:
        raise ValueError(f"expected a unique steady state at valve {valve}, found {roots}")
    T = roots[0]
    k = params.k0 * math.exp(-params.e_over_r / (T + KELVIN))
    c = params.q * c_in / (params.q + k)
    tc = (qc * params.t_coolant + params.a_jacket * T) / (qc + params.a_jacket)
    return np.array([c, T, tc])


def calibrate(params=CstrParams(), target_temperature=88.0, valve=None):
    """Root-find the coolant inlet temperature placing the steady state at
    ``target_temperature`` for the nominal valve. Returns updated params with
    the matching ``nominal_state``."""
    valve = params.nominal_valve if valve is None else valve

    def gap(t_coolant):
        return steady_state(replace(params, t_coolant=t_coolant), valve)[1] - target_temperature

    t_coolant = brentq(gap, -100.0, target_temperature - 1.0, xtol=1e-12)
    out = replace(params, t_coolant=t_coolant)
    return replace(out, nominal_state=tuple(float(v) for v in steady_state(out, valve)))


class CstrEnv(ProcessEnv):
    env_id = "cstr"

    def __init__(self, params=CstrParams(), seed=None, worker=0):
        self.params = params
        self.spec = EnvSpec(
            state_dim=5, action_dim=1, action_low=(0.0,), action_high=(100.0,),
            horizon=params.horizon, n_modes=len(params.setpoints), dt=params.dt,
        )
        self.normalizer = Normalizer(params.obs_center, params.obs_scale)
        super().__init__(seed, worker)

    def with_params(self, **changes):
        return CstrEnv(replace(self.params, **changes))

    def _reset(self, modes):
        n = modes.size
        x = np.tile(np.asarray(self.params.nominal_state, dtype=float), (n, 1))
        if self.params.t_jitter > 0:
            x[:, 1] += self.rng.uniform(-self.params.t_jitter, self.params.t_jitter, n)
        setpoint = np.asarray(self.params.setpoints, dtype=float)[modes]
        return CstrState(x=x, b=np.full(n, self.params.nominal_valve), setpoint=setpoint, t_index=0)

    def _step(self, state, action):
        new, reward, _ = cstr_step(state, action[:, 0], self.params, self.rng)
        return new, reward

    def raw_observation(self):
        return raw_cstr_observation(self.state)

    def _finite_rows(self, state):
        return np.all(np.isfinite(state.x), axis=-1)

    def _restore_rows(self, new, prev, mask):
        x = new.x.copy()
        x[mask] = prev.x[mask]
        return CstrState(x=x, b=new.b, setpoint=new.setpoint, t_index=new.t_index)

    def terminal_metric(self):
        """Absolute tracking error |T - T_set| at the current step."""
        return np.abs(self.state.temperature - self.state.setpoint)

    def mode_labels(self):
        return [f"Tset={s:g}" for s in self.params.setpoints]

    def operating_mode_from_observation(self, raw_obs):
        """Setpoint index recovered from raw observations (T + (Tset - T))."""
        raw_obs = np.asarray(raw_obs, dtype=float)
        setpoint = raw_obs[..., 1] + raw_obs[..., 4]
        table = np.asarray(self.params.setpoints, dtype=float)
        return np.argmin(np.abs(setpoint[..., None] - table), axis=-1)


def raw_cstr_observation(state):
    s = state
    return np.stack([s.c_a, s.temperature, s.jacket_temperature, s.b, s.setpoint - s.temperature], axis=-1)
