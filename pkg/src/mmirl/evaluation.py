"""Scoring learned policies and inferred modes against the withheld ground truth."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .rl.policy import augment


def confusion_matrix(pred, labels, n_pred, n_labels):
    C = np.zeros((n_pred, n_labels), dtype=int)
    np.add.at(C, (np.asarray(pred, dtype=int), np.asarray(labels, dtype=int)), 1)
    return C


def context_to_mode(pred, labels, n_contexts, n_modes):
    """Label assignment maximising agreement (latent indices are arbitrary).

    Returns an array ``mapping`` with ``mapping[z] = mode`` (-1 if unused).
    """
    C = confusion_matrix(pred, labels, n_contexts, n_modes)
    rows, cols = linear_sum_assignment(-C)
    mapping = np.full(n_contexts, -1, dtype=int)
    mapping[rows] = cols
    return mapping


def mode_to_context(mapping, n_modes):
    inv = np.full(n_modes, -1, dtype=int)
    for z, m in enumerate(mapping):
        if m >= 0:
            inv[m] = z
    return inv


def mapped_accuracy(pred, labels, mapping):
    return float(np.mean(np.asarray(mapping)[np.asarray(pred, dtype=int)] == np.asarray(labels)))


def steady_error(raw_obs, final_raw, window=50):
    """Mean |T - T_set| over the last ``window`` observed steps (CSTR raw observations)."""
    obs = np.concatenate([raw_obs, final_raw[:, None]], axis=1)[:, -window:]
    return np.mean(np.abs(obs[..., 4]), axis=1)


def run_policy(policy, env, mode, z, n_episodes, seed, deterministic=True):
    """Episodes of ``policy`` conditioned on context ``z`` in environment mode ``mode``.

    Returns raw states (n, T, d), actions, rewards and final raw states.
    """
    n_contexts = policy.obs_dim - env.spec.state_dim
    env.seed(seed, worker=100 + mode)
    rng = np.random.default_rng([seed, mode])
    obs = env.reset(np.full(n_episodes, mode))
    S, A, R = [], [], []
    zz = np.full(n_episodes, z)
    for _ in range(env.spec.horizon):
        S.append(env.raw_observation())
        u, _, _ = policy.act(augment(obs, zz, n_contexts), rng, deterministic=deterministic)
        u = np.clip(u, env.spec.low, env.spec.high)
        obs, r, _, _ = env.step(u)
        A.append(u)
        R.append(r)
    return np.stack(S, 1), np.stack(A, 1), np.stack(R, 1), env.raw_observation()


def _job(args):
    policy, env, mode, z, n, seed, det = args
    return run_policy(policy, env, mode, z, n, seed, det)


def run_modes(policy, env, contexts, n_episodes, seed, deterministic=True, workers=1):
    """``run_policy`` for every environment mode; ``contexts[m]`` conditions mode ``m``."""
    jobs = [(policy, env, m, int(contexts[m]), n_episodes, seed, deterministic) for m in range(env.spec.n_modes)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            return list(pool.map(_job, jobs))
    return [_job(j) for j in jobs]


def outcome_metric(env, states, final):
    """Bioreactor: terminal y2. CSTR: steady |T - T_set| over the last 50 steps."""
    if env.env_id == "cstr":
        return steady_error(states, final)
    if env.env_id == "bioreactor":
        return final[:, 1]
    return np.zeros(len(final))


@dataclass
class ModeMetrics:
    mode: int
    label: str
    context: int
    return_mean: float
    return_std: float
    expert_return_mean: float
    expert_return_std: float
    imitation_ratio: float | None
    outcome: float
    expert_outcome: float
    inference_accuracy: float | None


@dataclass
class EvalReport:
    env_id: str
    outcome_name: str
    modes: list
    metadata: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps({"env_id": self.env_id, "outcome_name": self.outcome_name,
                           "modes": [asdict(m) for m in self.modes], "metadata": self.metadata},
                          indent=2, sort_keys=True)

    CSV_COLUMNS = ("mode", "label", "context", "return_mean", "return_std", "expert_return_mean",
                   "expert_return_std", "imitation_ratio", "outcome", "expert_outcome", "inference_accuracy")

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        for m in self.modes:
            d = asdict(m)
            w.writerow(["" if d[c] is None else d[c] for c in self.CSV_COLUMNS])
        return buf.getvalue()

    def render(self):
        lines = [f"evaluation on {self.env_id} ({self.outcome_name})"]
        for m in self.modes:
            ratio = "n/a" if m.imitation_ratio is None else f"{m.imitation_ratio:.3f}"
            acc = "n/a" if m.inference_accuracy is None else f"{m.inference_accuracy:.3f}"
            lines.append(
                f"  mode {m.mode} [{m.label}] z={m.context}: return {m.return_mean:.4f} +- {m.return_std:.4f}"
                f" (expert {m.expert_return_mean:.4f}), imitation ratio {ratio}, {self.outcome_name}"
                f" {m.outcome:.4f} (expert {m.expert_outcome:.4f}), inference accuracy {acc}")
        return "\n".join(lines)


def imitation_ratio(learned, expert):
    return None if expert == 0 else float(learned / expert)


def build_report(env, rollouts, contexts, expert_returns, expert_outcomes, accuracies=None, metadata=None):
    """``rollouts[m]`` from :func:`run_modes`; expert arrays are per-mode lists of per-episode values."""
    labels = env.mode_labels()
    modes = []
    for m, (S, A, R, final) in enumerate(rollouts):
        ret = R.sum(axis=1)
        er = np.asarray(expert_returns[m], dtype=float)
        modes.append(ModeMetrics(
            mode=m, label=labels[m], context=int(contexts[m]),
            return_mean=float(ret.mean()), return_std=float(ret.std()),
            expert_return_mean=float(er.mean()), expert_return_std=float(er.std()),
            imitation_ratio=imitation_ratio(ret.mean(), er.mean()),
            outcome=float(np.mean(outcome_metric(env, S, final))),
            expert_outcome=float(np.mean(expert_outcomes[m])),
            inference_accuracy=None if accuracies is None else float(accuracies[m]),
        ))
    name = {"bioreactor": "terminal y2", "cstr": "steady |T - Tset|"}.get(env.env_id, "outcome")
    return EvalReport(env.env_id, name, modes, metadata or {})


def demo_statistics(env, dataset):
    """Per-mode expert returns and outcomes from a labelled dataset's sidecar."""
    labels = dataset.labels()
    returns, outcomes = [], []
    for m in range(env.spec.n_modes):
        recs = [r for r, l in zip(dataset.records, labels) if l == m]
        returns.append(np.array([r.sidecar.rewards.sum() for r in recs]))
        S = np.stack([r.states for r in recs])
        final = np.stack([r.sidecar.final_state for r in recs])
        outcomes.append(outcome_metric(env, S, final))
    return returns, outcomes
