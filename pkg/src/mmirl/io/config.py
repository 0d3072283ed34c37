"""Run configuration: TOML sections mapped onto dataclasses.

Every field has a default. Environment-dependent defaults (horizon, step,
noise and normalisation, plus the solver settings tuned per process) are
filled in from ``env.id`` once the file has been read, so an empty file is
a complete bioreactor config.
Unknown keys, wrong types and out-of-range values are rejected with the
dotted key path.
"""

from __future__ import annotations

import dataclasses
import sys
import typing
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib
import tomli_w

from ..envs import BioreactorEnv, BioreactorParams, ContextualBandit, CstrEnv, CstrParams
from ..envs.bandit import BanditParams
from .checkpoint import config_hash


class ConfigError(ValueError):
    pass


_CSTR = CstrParams()
_BIO = BioreactorParams()


@dataclass
class CstrConstants:
    q: float = _CSTR.q
    c_in: float = _CSTR.c_in
    t_feed: float = _CSTR.t_feed
    heat_of_reaction: float = _CSTR.heat_of_reaction
    a_reactor: float = _CSTR.a_reactor
    a_jacket: float = _CSTR.a_jacket
    qc_max: float = _CSTR.qc_max
    t_coolant: float = _CSTR.t_coolant
    e_over_r: float = _CSTR.e_over_r
    k0: float = _CSTR.k0
    nominal_valve: float = _CSTR.nominal_valve
    nominal_state: list = field(default_factory=lambda: list(_CSTR.nominal_state))


@dataclass
class EnvConfig:
    id: str = "bioreactor"
    horizon: typing.Optional[int] = None
    dt: typing.Optional[float] = None
    substeps: int = 10
    noise_std: typing.Optional[float] = None
    jitter: typing.Optional[float] = None
    move_penalty: float = 0.01
    obs_center: typing.Optional[list] = None
    obs_scale: typing.Optional[list] = None
    cstr: CstrConstants = field(default_factory=CstrConstants)


@dataclass
class ModesConfig:
    M: int = 2
    k_values: list = field(default_factory=lambda: list(_BIO.k_values))
    setpoints: list = field(default_factory=lambda: list(_CSTR.setpoints))


@dataclass
class ExpertConfig:
    n_iterations: int = 240
    n_episodes: int = 64
    pi_kc: float = 20.0
    pi_tau_i: float = 200.0


@dataclass
class IrlConfig:
    n_contexts: typing.Optional[int] = None
    n_iterations: typing.Optional[int] = None
    n_gen_episodes: int = 64
    n_disc_demos: int = 64
    disc_hidden: list = field(default_factory=lambda: [64, 64])
    inference_hidden: list = field(default_factory=lambda: [64])
    inference_features: int = 32
    disc_lr: float = 1e-3
    inference_lr: float = 1e-3
    disc_epochs: int = 1
    disc_minibatch_size: typing.Optional[int] = None
    inference_steps: int = 1
    alpha: float = 1.0
    beta: float = 1.0
    cluster_weight: float = 1.0
    disc_weight_decay: float = 0.0
    rollout_modes: typing.Optional[str] = None
    checkpoint_every: int = 50


@dataclass
class TrainingConfig:
    seed: int = 0
    workers: int = 1
    hidden: list = field(default_factory=lambda: [64, 64])
    lr: float = 3e-4
    value_lr: float = 1e-3
    gamma: typing.Optional[float] = None
    gae_lambda: typing.Optional[float] = None
    clip_ratio: float = 0.2
    ppo_epochs: int = 10
    minibatch_size: int = 256
    target_kl: float = 0.02
    ent_coef: float = 0.0
    max_grad_norm: float = 0.5
    log_std_init: typing.Optional[float] = None
    expert: ExpertConfig = field(default_factory=ExpertConfig)
    irl: IrlConfig = field(default_factory=IrlConfig)


@dataclass
class DemosConfig:
    per_mode: int = 1056
    shuffle_seed: int = 0
    rollout_seed: int = 0
    stochastic: bool = False


@dataclass
class EvalConfig:
    episodes: int = 100
    deterministic: bool = True
    seed: int = 12345


@dataclass
class IoConfig:
    out_dir: str = "runs"


@dataclass
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    modes: ModesConfig = field(default_factory=ModesConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    demos: DemosConfig = field(default_factory=DemosConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    io: IoConfig = field(default_factory=IoConfig)

    @property
    def env_id(self):
        return self.env.id

    def to_toml(self):
        return tomli_w.dumps(_strip_none(dataclasses.asdict(self)))

    def hash(self):
        return config_hash(self.to_toml())


ENV_DEFAULTS = {
    "bioreactor": dict(horizon=_BIO.horizon, dt=_BIO.dt, noise_std=0.0, jitter=_BIO.y1_jitter,
                       obs_center=list(_BIO.obs_center), obs_scale=list(_BIO.obs_scale), gamma=1.0,
                       gae_lambda=1.0, log_std_init=-0.5, rollout_modes="context", disc_minibatch_size=64,
                       irl_iterations=300),
    "cstr": dict(horizon=_CSTR.horizon, dt=_CSTR.dt, noise_std=_CSTR.noise_frac, jitter=_CSTR.t_jitter,
                 obs_center=list(_CSTR.obs_center), obs_scale=list(_CSTR.obs_scale), gamma=0.99,
                 gae_lambda=0.95, log_std_init=-1.5, rollout_modes="context", disc_minibatch_size=1024,
                 irl_iterations=200),
    "bandit": dict(horizon=BanditParams().horizon, dt=1.0, noise_std=0.0, jitter=0.0, obs_center=[0.0],
                   obs_scale=[1.0], gamma=0.99, gae_lambda=0.95, log_std_init=-0.5, rollout_modes="random",
                   disc_minibatch_size=64, irl_iterations=200),
}

# (predicate, description) per dotted key
_RANGES = {
    "env.horizon": (lambda v: v >= 1, ">= 1"),
    "env.dt": (lambda v: v > 0, "> 0"),
    "env.substeps": (lambda v: v >= 1, ">= 1"),
    "env.noise_std": (lambda v: v >= 0, ">= 0"),
    "env.jitter": (lambda v: v >= 0, ">= 0"),
    "env.move_penalty": (lambda v: v >= 0, ">= 0"),
    "modes.M": (lambda v: v >= 1, ">= 1"),
    "training.gamma": (lambda v: 0 < v <= 1, "in (0, 1]"),
    "training.gae_lambda": (lambda v: 0 <= v <= 1, "in [0, 1]"),
    "training.clip_ratio": (lambda v: 0 < v < 1, "in (0, 1)"),
    "training.lr": (lambda v: v > 0, "> 0"),
    "training.value_lr": (lambda v: v > 0, "> 0"),
    "training.ppo_epochs": (lambda v: v >= 1, ">= 1"),
    "training.minibatch_size": (lambda v: v >= 1, ">= 1"),
    "training.workers": (lambda v: v >= 1, ">= 1"),
    "training.ent_coef": (lambda v: v >= 0, ">= 0"),
    "training.expert.n_iterations": (lambda v: v >= 0, ">= 0"),
    "training.expert.n_episodes": (lambda v: v >= 1, ">= 1"),
    "training.expert.pi_kc": (lambda v: v >= 0, ">= 0"),
    "training.expert.pi_tau_i": (lambda v: v > 0, "> 0"),
    "training.irl.n_contexts": (lambda v: v >= 1, ">= 1"),
    "training.irl.n_iterations": (lambda v: v >= 0, ">= 0"),
    "training.irl.n_gen_episodes": (lambda v: v >= 1, ">= 1"),
    "training.irl.n_disc_demos": (lambda v: v >= 1, ">= 1"),
    "training.irl.disc_lr": (lambda v: v > 0, "> 0"),
    "training.irl.inference_lr": (lambda v: v > 0, "> 0"),
    "training.irl.alpha": (lambda v: v >= 0, ">= 0"),
    "training.irl.beta": (lambda v: v >= 0, ">= 0"),
    "training.irl.cluster_weight": (lambda v: v >= 0, ">= 0"),
    "training.irl.rollout_modes": (lambda v: v in ("random", "context", "demo"), "'random', 'context' or 'demo'"),
    "training.irl.disc_minibatch_size": (lambda v: v >= 1, ">= 1"),
    "training.irl.checkpoint_every": (lambda v: v >= 1, ">= 1"),
    "demos.per_mode": (lambda v: v >= 1, ">= 1"),
    "eval.episodes": (lambda v: v >= 1, ">= 1"),
}


def _strip_none(d):
    if isinstance(d, dict):
        return {k: _strip_none(v) for k, v in d.items() if v is not None}
    return d


def _coerce(value, tp, path):
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        return _coerce(value, args[0], path)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a table, got {type(value).__name__}")
        return _build(tp, value, path)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if tp is list:
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected an array, got {value!r}")
        for i, v in enumerate(value):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{path}[{i}]: expected a number, got {v!r}")
        return list(value)
    raise ConfigError(f"{path}: unsupported field type {tp}")  # pragma: no cover


def _build(cls, data, prefix=""):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        where = prefix or "top level"
        raise ConfigError(f"unknown key {prefix + '.' if prefix else ''}{unknown[0]} (in {where})")
    kwargs = {}
    for name, value in data.items():
        path = f"{prefix}.{name}" if prefix else name
        kwargs[name] = _coerce(value, hints[name], path)
    return cls(**kwargs)


def _walk(obj, prefix=""):
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        path = f"{prefix}.{f.name}" if prefix else f.name
        if dataclasses.is_dataclass(v):
            yield from _walk(v, path)
        else:
            yield path, v


def _resolve(cfg):
    env_id = cfg.env.id
    if env_id not in ENV_DEFAULTS:
        raise ConfigError(f"env.id: unknown environment {env_id!r} (choose from {sorted(ENV_DEFAULTS)})")
    d = ENV_DEFAULTS[env_id]
    for key in ("horizon", "dt", "noise_std", "jitter", "obs_center", "obs_scale"):
        if getattr(cfg.env, key) is None:
            setattr(cfg.env, key, d[key])
    for key in ("gamma", "gae_lambda", "log_std_init"):
        if getattr(cfg.training, key) is None:
            setattr(cfg.training, key, d[key])
    for key in ("rollout_modes", "disc_minibatch_size"):
        if getattr(cfg.training.irl, key) is None:
            setattr(cfg.training.irl, key, d[key])
    if cfg.training.irl.n_iterations is None:
        cfg.training.irl.n_iterations = d["irl_iterations"]
    if cfg.training.irl.n_contexts is None:
        cfg.training.irl.n_contexts = cfg.modes.M
    return cfg


def _validate(cfg):
    for path, value in _walk(cfg):
        check = _RANGES.get(path)
        if check is not None and value is not None and not check[0](value):
            raise ConfigError(f"{path} = {value!r} is out of range (must be {check[1]})")
    M = cfg.modes.M
    if cfg.training.irl.rollout_modes == "context" and cfg.training.irl.n_contexts != M:
        raise ConfigError(f"training.irl.rollout_modes = 'context' needs training.irl.n_contexts = modes.M ({M})")
    if cfg.training.irl.rollout_modes == "demo" and cfg.env.id != "cstr":
        raise ConfigError("training.irl.rollout_modes = 'demo' is only available for cstr")
    table = {"bioreactor": ("modes.k_values", cfg.modes.k_values), "cstr": ("modes.setpoints", cfg.modes.setpoints)}
    if cfg.env.id in table:
        key, values = table[cfg.env.id]
        if len(values) < M:
            raise ConfigError(f"{key} lists {len(values)} mode(s) but modes.M = {M}")
    if cfg.env.id == "bioreactor" and any(k < 0 for k in cfg.modes.k_values):
        raise ConfigError("modes.k_values must be non-negative")
    width = {"bioreactor": 2, "cstr": 5, "bandit": 1}[cfg.env.id]
    for key in ("obs_center", "obs_scale"):
        v = getattr(cfg.env, key)
        if len(v) != width:
            raise ConfigError(f"env.{key} needs {width} entries for {cfg.env.id}, got {len(v)}")
    if any(s <= 0 for s in cfg.env.obs_scale):
        raise ConfigError("env.obs_scale entries must be positive")
    return cfg


def parse_config(source=""):
    """Parse TOML text, or the file at ``source`` if it is a path; returns a resolved RunConfig."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and "=" not in source
                                    and source.strip() and Path(source).exists()):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source or ""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return _validate(_resolve(_build(RunConfig, data)))


def default_config(env_id="bioreactor"):
    return parse_config(f'[env]\nid = "{env_id}"\n')


def write_effective_config(cfg, run_dir):
    path = Path(run_dir) / "config.toml"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(cfg.to_toml(), encoding="utf-8")
    return path


# -- factories -----------------------------------------------------------------
def make_env(cfg, seed=None, worker=0):
    e, M = cfg.env, cfg.modes.M
    if e.id == "bioreactor":
        params = BioreactorParams(
            k_values=tuple(cfg.modes.k_values[:M]), horizon=e.horizon, t_final=e.dt * e.horizon,
            substeps=e.substeps, move_penalty=e.move_penalty, y1_jitter=e.jitter,
            obs_center=tuple(e.obs_center), obs_scale=tuple(e.obs_scale),
        )
        return BioreactorEnv(params, seed=seed, worker=worker)
    if e.id == "cstr":
        c = e.cstr
        params = CstrParams(
            q=c.q, c_in=c.c_in, t_feed=c.t_feed, heat_of_reaction=c.heat_of_reaction, a_reactor=c.a_reactor,
            a_jacket=c.a_jacket, qc_max=c.qc_max, t_coolant=c.t_coolant, e_over_r=c.e_over_r, k0=c.k0,
            nominal_valve=c.nominal_valve, nominal_state=tuple(c.nominal_state),
            setpoints=tuple(cfg.modes.setpoints[:M]), horizon=e.horizon, dt=e.dt, substeps=e.substeps,
            noise_frac=e.noise_std, t_jitter=e.jitter, move_penalty=e.move_penalty,
            obs_center=tuple(e.obs_center), obs_scale=tuple(e.obs_scale),
        )
        return CstrEnv(params, seed=seed, worker=worker)
    return ContextualBandit(BanditParams(horizon=e.horizon), seed=seed, worker=worker)


def expert_estimator(cfg):
    from ..rl import ForwardRL

    t = cfg.training
    return ForwardRL(
        hidden=tuple(t.hidden), lr=t.lr, value_lr=t.value_lr, gamma=t.gamma, gae_lambda=t.gae_lambda,
        clip_ratio=t.clip_ratio, ent_coef=t.ent_coef, epochs=t.ppo_epochs, minibatch_size=t.minibatch_size,
        target_kl=t.target_kl, max_grad_norm=t.max_grad_norm, log_std_init=t.log_std_init,
        n_episodes=t.expert.n_episodes, n_iterations=t.expert.n_iterations, seed=t.seed,
    )


def irl_estimator(cfg, env):
    from ..irl import MultiTaskAIRL

    t, i = cfg.training, cfg.training.irl
    return MultiTaskAIRL(
        env=env, n_contexts=i.n_contexts, hidden=tuple(t.hidden), disc_hidden=tuple(i.disc_hidden),
        inference_hidden=tuple(i.inference_hidden), inference_features=i.inference_features,
        n_iterations=i.n_iterations, n_gen_episodes=i.n_gen_episodes, n_disc_demos=i.n_disc_demos,
        policy_lr=t.lr, value_lr=t.value_lr, disc_lr=i.disc_lr, inference_lr=i.inference_lr, gamma=t.gamma,
        gae_lambda=t.gae_lambda, clip_ratio=t.clip_ratio, ppo_epochs=t.ppo_epochs,
        minibatch_size=t.minibatch_size, target_kl=t.target_kl, ent_coef=t.ent_coef,
        log_std_init=t.log_std_init, disc_epochs=i.disc_epochs, disc_minibatch_size=i.disc_minibatch_size,
        inference_steps=i.inference_steps, info_weight=i.alpha, inference_weight=i.beta,
        cluster_weight=i.cluster_weight, disc_weight_decay=i.disc_weight_decay,
        rollout_modes=i.rollout_modes, seed=t.seed,
    )
