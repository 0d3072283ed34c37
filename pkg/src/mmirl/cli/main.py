"""``mmirl`` command-line runner.

Every subcommand writes into a fresh run directory
``<out>/<YYYYmmdd-HHMMSS>-<config hash>-<subcommand>`` holding the effective
configuration, so a run can be repeated from its own echo.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .. import __version__
from ..evaluation import (
    build_report,
    confusion_matrix,
    context_to_mode,
    demo_statistics,
    mode_to_context,
    run_modes,
)
from ..experts import DemoConfig, PiExpert, PolicyExpert, generate_demos, rollout_expert
from ..io import (
    CheckpointError,
    ConfigError,
    DatasetError,
    MetricsWriter,
    load_checkpoint,
    load_training_demos,
    make_env,
    parse_config,
    read_dataset,
    save_estimator,
    write_dataset,
    write_effective_config,
)
from ..io.config import expert_estimator, irl_estimator, tomli_w, tomllib
from ..io.dataset import format_real
from ..irl import TrainingDiverged
from .svg import Panel, Series, line_chart

log = logging.getLogger("mmirl")

TRACE_COLUMNS = {
    "bioreactor": ("y1", "y2"),
    "cstr": ("c_a", "T", "T_jacket", "b", "Tset_minus_T"),
    "bandit": ("x",),
}
ACTION_COLUMNS = {"bioreactor": ("u1", "u2"), "cstr": ("valve",), "bandit": ("u",)}


class UsageError(Exception):
    """Bad flag values discovered after parsing (exit 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


# -- configuration and run directories ---------------------------------------
def load_config(path=None, env_id=None, workers=None):
    data = {}
    if path:
        try:
            data = tomllib.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from None
    if env_id:
        data.setdefault("env", {})["id"] = env_id
    seed = os.environ.get("MMIRL_SEED")
    if seed is not None:
        try:
            data.setdefault("training", {})["seed"] = int(seed)
        except ValueError:
            raise ConfigError(f"MMIRL_SEED must be an integer, got {seed!r}") from None
    if workers is not None:
        data.setdefault("training", {})["workers"] = workers
    return parse_config(tomli_w.dumps(data))


def make_run_dir(base, cfg, command):
    stamp = time.strftime("%Y%m%d-%H%M%S")
    root = Path(base)
    run = root / f"{stamp}-{cfg.hash()}-{command}"
    k = 1
    while run.exists():
        k += 1
        run = root / f"{stamp}-{cfg.hash()}-{command}-{k}"
    run.mkdir(parents=True)
    write_effective_config(cfg, run)
    return run


def resolve_checkpoint(path, default_name):
    path = Path(path)
    if path.is_dir():
        path = path / default_name
    if not path.exists():
        raise CheckpointError(f"no checkpoint at {path}")
    return path


def config_for_checkpoint(args, ckpt):
    """--config wins; otherwise the echo stored next to the checkpoint."""
    if args.config:
        return load_config(args.config, workers=args.workers)
    echo = ckpt.parent / "config.toml"
    return load_config(echo if echo.exists() else None, workers=args.workers)


def load_policy_checkpoint(path, cfg, env):
    """Rebuild whichever estimator the checkpoint holds."""
    blocks, vectors, meta = load_checkpoint(path)
    kind = meta.get("estimator")
    if kind == "ForwardRL":
        est = expert_estimator(cfg)
        est.set_state(blocks, vectors, meta, env=env)
    elif kind == "MultiTaskAIRL":
        est = irl_estimator(cfg, env)
        est.set_state(blocks, vectors, meta)
    else:
        raise CheckpointError(f"{path}: unknown estimator {kind!r}")
    return est, meta


# -- controllers ----------------------------------------------------------------
class ConstantController:
    kind = "constant"

    def __init__(self, value):
        self.value = float(value)

    def reset(self, env):
        pass

    def act(self, env, rng=None):
        return np.full((env.n_envs, env.spec.action_dim), self.value)


class ContextController:
    """A learned policy held at one latent context."""

    kind = "policy"

    def __init__(self, agent, z):
        self.agent = agent
        self.z = int(z)

    def reset(self, env):
        pass

    def act(self, env, rng=None):
        return self.agent.act(env.observe(), np.full(env.n_envs, self.z), deterministic=True)


def make_controller(spec, cfg, env, context=None):
    if spec == "pi":
        if env.env_id != "cstr":
            raise UsageError("the pi controller is only defined for the cstr environment")
        return PiExpert(cfg.training.expert.pi_kc, cfg.training.expert.pi_tau_i)
    if spec.startswith("constant:"):
        try:
            return ConstantController(float(spec.split(":", 1)[1]))
        except ValueError:
            raise UsageError(f"bad constant controller {spec!r}") from None
    if spec.startswith("checkpoint:"):
        est, _ = load_policy_checkpoint(Path(spec.split(":", 1)[1]), cfg, env)
        if context is None:
            return PolicyExpert(est.agent_, stochastic=False)
        return ContextController(est.agent_, context)
    raise UsageError(f"unknown controller {spec!r} (pi, constant:V or checkpoint:PATH)")


# -- traces and charts ----------------------------------------------------------
def write_trace(path, env, states, actions, rewards, final):
    names = TRACE_COLUMNS[env.env_id]
    anames = ACTION_COLUMNS[env.env_id]
    dt, f = env.spec.dt, format_real
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", *names, *anames, "reward"))
        for k in range(len(states)):
            w.writerow((f(k * dt), *map(f, states[k]), *map(f, actions[k]), f(rewards[k])))
        w.writerow((f(len(states) * dt), *map(f, final), *([""] * len(anames)), ""))


def output_series(env, states, final, label, dashed=False):
    full = np.concatenate([states, final[None]], axis=0)
    t = np.arange(len(full)) * env.spec.dt
    if env.env_id == "bioreactor":
        return [Series(f"y1 {label}", t, full[:, 0], dashed), Series(f"y2 {label}", t, full[:, 1], dashed)]
    if env.env_id == "cstr":
        return [Series(f"T {label}", t, full[:, 1], dashed)]
    return [Series(f"x {label}", t, full[:, 0], dashed)]


def action_series(env, actions, label, dashed=False):
    t = np.arange(len(actions) + 1) * env.spec.dt
    padded = np.concatenate([actions, actions[-1:]], axis=0)
    names = ACTION_COLUMNS[env.env_id]
    return [Series(f"{n} {label}", t, padded[:, i], dashed, step=True) for i, n in enumerate(names)]


def chart(env, runs, title, annotations=()):
    """``runs``: list of (label, states, actions, final, dashed)."""
    outputs = Panel("outputs" if env.env_id != "cstr" else "temperature")
    acts = Panel("actions" if env.env_id != "cstr" else "valve %")
    for label, S, A, final, dashed in runs:
        outputs.series += output_series(env, S, final, label, dashed)
        acts.series += action_series(env, A, label, dashed)
    if env.env_id == "cstr" and runs:
        S = runs[0][1]
        outputs.hlines.append((float(S[0, 1] + S[0, 4]), "setpoint"))
    xlabel = "time (s)" if env.env_id == "cstr" else "time"
    return line_chart([outputs, acts], xlabel, title=title, annotations=annotations)


# -- subcommands ------------------------------------------------------------------
def cmd_simulate(args):
    cfg = load_config(args.config, args.env, args.workers)
    env = make_env(cfg, seed=cfg.training.seed)
    if not 0 <= args.mode < env.spec.n_modes:
        raise UsageError(f"--mode must be in [0, {env.spec.n_modes - 1}]")
    controller = make_controller(args.controller, cfg, env, args.context)
    run = make_run_dir(args.out or cfg.io.out_dir, cfg, "simulate")
    rng = np.random.default_rng([cfg.training.seed, args.mode])
    S, A, R, final, aborted = rollout_expert(env, controller, np.array([args.mode]), rng)
    if aborted[0]:
        raise RuntimeError("simulation aborted on a non-finite state")
    write_trace(run / "trace.csv", env, S[0], A[0], R[0], final[0])
    label = env.mode_labels()[args.mode]
    (run / "trace.svg").write_text(
        chart(env, [(args.controller, S[0], A[0], final[0], False)], f"{env.env_id} {label}",
              annotations=(f"mode {args.mode}: {label}", f"return {R[0].sum():.4f}")), encoding="utf-8")
    print(f"return {R[0].sum():.6f}")
    print(run)
    return 0


def cmd_train_expert(args):
    cfg = load_config(args.config, args.env, args.workers)
    env = make_env(cfg, seed=cfg.training.seed)
    run = make_run_dir(args.out or cfg.io.out_dir, cfg, "train-expert")
    est = expert_estimator(cfg)
    with MetricsWriter(run / "metrics.jsonl") as metrics:
        def report(rec):
            metrics(rec)
            if rec["step"] % 10 == 0 or rec["step"] == cfg.training.expert.n_iterations:
                log.info("iteration %d: return %.4f +- %.4f", rec["step"], rec["return_mean"], rec["return_std"])
        est.fit(env, callback=report)
    save_estimator(run / "expert.ckpt", est, {"config_hash": cfg.hash()})
    print(run)
    return 0


def cmd_gen_demos(args):
    cfg = load_config(args.config, args.env, args.workers)
    env = make_env(cfg, seed=cfg.demos.rollout_seed)
    expert = make_controller(args.expert, cfg, env)
    if isinstance(expert, ContextController):
        raise UsageError("--expert checkpoint must hold a trained expert")
    per_mode = args.per_mode or cfg.demos.per_mode
    dc = DemoConfig(per_mode, cfg.demos.shuffle_seed, cfg.demos.rollout_seed, cfg.demos.stochastic)
    data = generate_demos(env, expert, dc, workers=cfg.training.workers)
    out = Path(args.out)
    write_dataset(out, data.records)
    run = make_run_dir(args.run_dir or cfg.io.out_dir, cfg, "gen-demos")
    summary = {"path": str(out.resolve()), "n_trajectories": len(data), "mode_counts": data.mode_counts(),
               **data.info}
    (run / "demos.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=str), encoding="utf-8")
    print(f"{len(data)} trajectories of length {env.spec.horizon} -> {out}")
    print(run)
    return 0


def cmd_train_irl(args):
    cfg = load_config(args.config, args.env, args.workers)
    env = make_env(cfg, seed=cfg.training.seed)
    demos = load_training_demos(args.demos)
    if demos and demos[0].env_id != env.env_id:
        raise UsageError(f"demonstrations are for {demos[0].env_id}, config is for {env.env_id}")
    run = make_run_dir(args.out or cfg.io.out_dir, cfg, "train-irl")
    est = irl_estimator(cfg, env)
    meta = {"config_hash": cfg.hash(), "demos": str(Path(args.demos).resolve())}
    if args.resume:
        est, saved = load_policy_checkpoint(resolve_checkpoint(args.resume, "irl.ckpt"), cfg, env)
        if saved["estimator"] != "MultiTaskAIRL":
            raise UsageError("--resume needs an IRL checkpoint")
    total = cfg.training.irl.n_iterations
    every = cfg.training.irl.checkpoint_every
    ckpt = run / "irl.ckpt"
    with MetricsWriter(run / "metrics.jsonl") as metrics:
        def report(rec):
            metrics(rec)
            if rec["iteration"] % 10 == 0:
                log.info("iteration %d: disc acc %.3f, L_I %.4f, return %.4f", rec["iteration"],
                         rec["disc_accuracy"], rec["L_I"], rec["true_return"])
        if not hasattr(est, "agent_"):
            est.partial_fit(demos, 0)
        while est.iteration_ < total:
            est.partial_fit(demos, min(every, total - est.iteration_), callback=report)
            save_estimator(ckpt, est, meta)
    save_estimator(ckpt, est, meta)
    print(run)
    return 0


def _mode_accuracy(pred, labels, mapping, n_modes):
    mapped = np.asarray(mapping)[pred]
    return [float(np.mean(mapped[labels == m] == m)) if np.any(labels == m) else float("nan")
            for m in range(n_modes)]


def _infer(est, data, n_modes):
    labels = data.labels()
    pred = est.predict_mode(data)
    mapping = context_to_mode(pred, labels, est.n_contexts, n_modes)
    return labels, pred, mapping


def cmd_eval(args):
    ckpt = resolve_checkpoint(args.checkpoint, "irl.ckpt")
    cfg = config_for_checkpoint(args, ckpt)
    env = make_env(cfg, seed=cfg.eval.seed)
    est, meta = load_policy_checkpoint(ckpt, cfg, env)
    demos_path = args.demos or meta.get("demos")
    if not demos_path:
        raise UsageError("no demonstrations recorded in the checkpoint; pass --demos")
    data = read_dataset(demos_path)
    M = env.spec.n_modes
    if meta["estimator"] == "MultiTaskAIRL":
        labels, pred, mapping = _infer(est, data, M)
        contexts = mode_to_context(mapping, M)
        C = confusion_matrix(pred, labels, est.n_contexts, M)
        contexts = np.where(contexts < 0, np.argmax(C, axis=0), contexts)
        accuracies = _mode_accuracy(pred, labels, mapping, M)
    else:
        contexts, accuracies = np.arange(M), None
    episodes = args.episodes or cfg.eval.episodes
    rollouts = run_modes(est.agent_.policy, env, contexts, episodes, cfg.eval.seed,
                         deterministic=cfg.eval.deterministic, workers=cfg.training.workers)
    exp_returns, exp_outcomes = demo_statistics(env, data)
    report = build_report(env, rollouts, contexts, exp_returns, exp_outcomes, accuracies,
                          metadata={"checkpoint": str(ckpt.resolve()), "iteration": meta.get("iteration"),
                                    "episodes": episodes, "config_hash": cfg.hash(), "version": __version__})
    run = make_run_dir(args.out or cfg.io.out_dir, cfg, "eval")
    (run / "report.txt").write_text(report.render() + "\n", encoding="utf-8")
    (run / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (run / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    labels_all = data.labels()
    for m, (S, A, R, final) in enumerate(rollouts):
        recs = [r for r, lab in zip(data.records, labels_all) if lab == m]
        ES = np.mean([r.states for r in recs], axis=0)
        EA = np.mean([r.actions for r in recs], axis=0)
        Ef = np.mean([r.sidecar.final_state for r in recs], axis=0)
        mm = report.modes[m]
        notes = [f"mode {m}: {mm.label}", f"context z={mm.context}",
                 "ratio n/a" if mm.imitation_ratio is None else f"ratio {mm.imitation_ratio:.3f}"]
        svg = chart(env, [("learned", S.mean(0), A.mean(0), final.mean(0), False), ("expert", ES, EA, Ef, True)],
                    f"{env.env_id} mode {m} ({mm.label}): learned vs expert", notes)
        (run / f"mode{m}.svg").write_text(svg, encoding="utf-8")
    print(report.render())
    print(run)
    return 0


def cmd_infer_mode(args):
    ckpt = resolve_checkpoint(args.checkpoint, "irl.ckpt")
    cfg = config_for_checkpoint(args, ckpt)
    env = make_env(cfg, seed=cfg.eval.seed)
    est, meta = load_policy_checkpoint(ckpt, cfg, env)
    if meta["estimator"] != "MultiTaskAIRL":
        raise UsageError("infer-mode needs an IRL checkpoint")
    data = read_dataset(args.demos)
    M = env.spec.n_modes
    labels, pred, mapping = _infer(est, data, M)
    C = confusion_matrix(pred, labels, est.n_contexts, M)
    acc = float(np.mean(mapping[pred] == labels))
    run = make_run_dir(args.out or cfg.io.out_dir, cfg, "infer-mode")
    lines = ["confusion matrix (rows: inferred context, columns: true mode)",
             "      " + " ".join(f"{m:>7d}" for m in range(M))]
    lines += [f"z={z:<3d} " + " ".join(f"{c:>7d}" for c in C[z]) for z in range(est.n_contexts)]
    lines.append(f"context -> mode: {mapping.tolist()}")
    lines.append(f"accuracy {acc:.4f}")
    text = "\n".join(lines)
    (run / "inference.txt").write_text(text + "\n", encoding="utf-8")
    (run / "inference.json").write_text(json.dumps(
        {"confusion": C.tolist(), "mapping": mapping.tolist(), "accuracy": acc}, indent=2) + "\n", encoding="utf-8")
    print(text)
    print(run)
    return 0


# -- entry point ------------------------------------------------------------------
def build_parser():
    p = _Parser(prog="mmirl", description="Multi-mode process control from unlabelled demonstrations.")
    p.add_argument("--version", action="version", version=f"mmirl {__version__}")
    p.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, env=True):
        sp.add_argument("--config", help="TOML run configuration")
        if env:
            sp.add_argument("--env", choices=("bioreactor", "cstr", "bandit"), help="override env.id")
        sp.add_argument("--workers", type=int, help="cap on rollout worker processes")

    s = sub.add_parser("simulate", help="closed-loop trace of one episode")
    common(s)
    s.add_argument("--mode", type=int, default=0)
    s.add_argument("--controller", default="constant:0", help="pi, constant:V or checkpoint:PATH")
    s.add_argument("--context", type=int, help="latent context for an IRL checkpoint policy")
    s.add_argument("--out", help="parent directory of the run directory")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("train-expert", help="forward RL on the true reward")
    common(s)
    s.add_argument("--out")
    s.set_defaults(func=cmd_train_expert)

    s = sub.add_parser("gen-demos", help="write a demonstration dataset")
    common(s)
    s.add_argument("--expert", required=True, help="pi or checkpoint:PATH")
    s.add_argument("--per-mode", type=int)
    s.add_argument("--out", required=True, help="dataset file (JSON lines)")
    s.add_argument("--run-dir", help="parent directory of the run directory")
    s.set_defaults(func=cmd_gen_demos)

    s = sub.add_parser("train-irl", help="learn reward, policy and mode inference from demonstrations")
    common(s)
    s.add_argument("--demos", required=True)
    s.add_argument("--resume", help="IRL checkpoint (file or run directory) to continue from")
    s.add_argument("--out")
    s.set_defaults(func=cmd_train_irl)

    s = sub.add_parser("eval", help="score a checkpoint against the expert demonstrations")
    common(s, env=False)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--demos", help="labelled dataset (defaults to the one used for training)")
    s.add_argument("--episodes", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("infer-mode", help="confusion matrix of inferred contexts against true modes")
    common(s, env=False)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--demos", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_infer_mode)
    return p


def run(argv=None):
    """Parse ``argv`` and execute; returns the exit status (0 ok, 1 runtime failure, 2 usage)."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mmirl: usage error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"mmirl: config error: {exc}", file=sys.stderr)
        return 1
    except (DatasetError, CheckpointError) as exc:
        print(f"mmirl: data error: {exc}", file=sys.stderr)
        return 1
    except TrainingDiverged as exc:
        print(f"mmirl: training diverged: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"mmirl: runtime error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())
