from .bandit import BanditExpert, BanditParams, ContextualBandit
from .base import EnvAbort, EnvSpec, EpisodeFinished, Normalizer, ProcessEnv, rk4
from .bioreactor import (
    BioreactorEnv,
    BioreactorParams,
    BioreactorState,
    bioreactor_rhs,
    bioreactor_step,
    move_cost,
)
from .cstr import (
    CstrEnv,
    CstrParams,
    CstrState,
    calibrate,
    cstr_reward,
    cstr_rhs,
    cstr_step,
    raw_cstr_observation,
    steady_state,
)

ENVIRONMENTS = {"bioreactor": BioreactorEnv, "cstr": CstrEnv, "bandit": ContextualBandit}

__all__ = [
    "BanditExpert",
    "BanditParams",
    "BioreactorEnv",
    "BioreactorParams",
    "BioreactorState",
    "ContextualBandit",
    "CstrEnv",
    "CstrParams",
    "CstrState",
    "ENVIRONMENTS",
    "EnvAbort",
    "EnvSpec",
    "EpisodeFinished",
    "Normalizer",
    "ProcessEnv",
    "bioreactor_rhs",
    "bioreactor_step",
    "calibrate",
    "cstr_reward",
    "cstr_rhs",
    "cstr_step",
    "move_cost",
    "raw_cstr_observation",
    "rk4",
    "steady_state",
]
