"""Line-delimited JSON trajectory files.

Each line holds one trajectory. Reals are written with 17 significant
digits, which round-trips every finite double. The optional ``sidecar``
carries the mode label and rewards for evaluation only; the training load
path returns :class:`Trajectory`, a type without that field.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Sidecar:
    """Withheld from training: ground-truth mode and the true per-step rewards."""

    mode_label: int
    rewards: np.ndarray
    expert_kind: str
    final_state: np.ndarray | None = None


@dataclass(frozen=True)
class Trajectory:
    """States and actions only; what the IRL trainer is allowed to see."""

    env_id: str
    states: np.ndarray
    actions: np.ndarray

    @property
    def length(self):
        return len(self.states)


@dataclass(frozen=True)
class TrajectoryRecord:
    env_id: str
    states: np.ndarray
    actions: np.ndarray
    sidecar: Sidecar | None = None
    schema_version: int = SCHEMA_VERSION

    @property
    def length(self):
        return len(self.states)

    def strip(self):
        return Trajectory(self.env_id, self.states, self.actions)


@dataclass
class DemoDataset:
    records: list
    info: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def states(self):
        return np.stack([r.states for r in self.records])

    def actions(self):
        return np.stack([r.actions for r in self.records])

    def labels(self):
        return np.array([r.sidecar.mode_label for r in self.records], dtype=int)

    def mode_counts(self):
        return dict(sorted(Counter(self.labels().tolist()).items()))

    def stripped(self):
        return [r.strip() for r in self.records]


# -- serialisation -----------------------------------------------------------
def format_real(x):
    x = float(x)
    if not math.isfinite(x):
        raise DatasetError(f"cannot serialise non-finite value {x!r}")
    s = format(x, ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"  # keeps -0.0 and integral values as reals
    return s


def _dump(obj):
    if isinstance(obj, dict):
        return "{" + ",".join(json.dumps(str(k)) + ":" + _dump(v) for k, v in obj.items()) + "}"
    if isinstance(obj, np.ndarray):
        return _dump(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_dump(v) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)) or obj is None or isinstance(obj, str):
        return json.dumps(bool(obj) if isinstance(obj, np.bool_) else obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_real(obj)
    raise DatasetError(f"cannot serialise {type(obj).__name__}")


def record_to_line(rec):
    d = {
        "schema_version": rec.schema_version,
        "env_id": rec.env_id,
        "length": rec.length,
        "states": np.asarray(rec.states, dtype=float),
        "actions": np.asarray(rec.actions, dtype=float),
    }
    if rec.sidecar is not None:
        sc = rec.sidecar
        d["sidecar"] = {
            "mode_label": int(sc.mode_label),
            "rewards": np.asarray(sc.rewards, dtype=float),
            "expert_kind": sc.expert_kind,
        }
        if sc.final_state is not None:
            d["sidecar"]["final_state"] = np.asarray(sc.final_state, dtype=float)
    return _dump(d)


def _matrix(value, name, lineno, length):
    a = np.asarray(value, dtype=float)
    if a.ndim == 1 and a.size == 0:
        a = a.reshape(0, 0)
    if a.ndim != 2:
        raise DatasetError(f"line {lineno}: {name} must be a list of rows")
    if a.shape[0] != length:
        raise DatasetError(f"line {lineno}: {name} has {a.shape[0]} rows but length is {length}")
    return a


def line_to_record(line, lineno=0):
    try:
        d = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"line {lineno}: truncated or malformed record ({exc.msg})") from None
    if not isinstance(d, dict):
        raise DatasetError(f"line {lineno}: record must be an object")
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DatasetError(f"line {lineno}: schema version {version!r}, this reader supports {SCHEMA_VERSION}")
    try:
        length = int(d["length"])
        states = _matrix(d["states"], "states", lineno, length)
        actions = _matrix(d["actions"], "actions", lineno, length)
        sidecar = None
        if d.get("sidecar") is not None:
            sc = d["sidecar"]
            rewards = np.asarray(sc["rewards"], dtype=float)
            if rewards.shape != (length,):
                raise DatasetError(f"line {lineno}: sidecar rewards have {rewards.size} entries, length is {length}")
            final = sc.get("final_state")
            sidecar = Sidecar(int(sc["mode_label"]), rewards, str(sc["expert_kind"]),
                              None if final is None else np.asarray(final, dtype=float))
        return TrajectoryRecord(str(d["env_id"]), states, actions, sidecar, version)
    except KeyError as exc:
        raise DatasetError(f"line {lineno}: missing field {exc.args[0]!r}") from None


def write_dataset(path, records):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(record_to_line(rec))
            fh.write("\n")
    tmp.replace(path)


def read_dataset(path, strip_sidecar=False):
    """Load all records; with ``strip_sidecar`` return :class:`Trajectory` objects."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = line_to_record(line, lineno)
            out.append(rec.strip() if strip_sidecar else rec)
    return out if strip_sidecar else DemoDataset(out)


def load_training_demos(path):
    """The trainer's load path: states and actions, no labels, no rewards."""
    return read_dataset(path, strip_sidecar=True)
