"""Binary checkpoints: magic, JSON header, then raw little-endian float64 vectors.

Layout::

    b"MMIRLCK1" | uint64 LE header length | UTF-8 JSON header | vectors...

The header lists every vector with its name, shape table and length, plus
free-form metadata (config hash, iteration, RNG and optimiser state).
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from ..numeric import ParamBlock

MAGIC = b"MMIRLCK1"


class CheckpointError(ValueError):
    pass


def _shape_table(shapes):
    return [[int(r), int(c)] for r, c in shapes]


def save_checkpoint(path, blocks, metadata=None, vectors=None):
    """Write ``blocks`` (name -> ParamBlock) and optional raw ``vectors`` atomically."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries, payload = [], []
    for name, block in blocks.items():
        entries.append({"name": name, "kind": "block", "shapes": _shape_table(block.shapes),
                        "size": len(block)})
        payload.append(block.values)
    for name, vec in (vectors or {}).items():
        vec = np.asarray(vec, dtype=float).reshape(-1)
        entries.append({"name": name, "kind": "vector", "size": int(vec.size)})
        payload.append(vec)
    header = json.dumps({"entries": entries, "metadata": metadata or {}}, sort_keys=True).encode("utf-8")
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<Q", len(header)))
            fh.write(header)
            for vec in payload:
                fh.write(np.ascontiguousarray(vec, dtype="<f8").tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path):
    """Returns ``(blocks, vectors, metadata)``."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    (hlen,) = struct.unpack("<Q", data[8:16])
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise CheckpointError(f"{path}: corrupt header") from None
    offset = 16 + hlen
    blocks, vectors = {}, {}
    for e in header["entries"]:
        n = e["size"]
        end = offset + 8 * n
        if end > len(data):
            raise CheckpointError(f"{path}: truncated while reading {e['name']!r}")
        vec = np.frombuffer(data, dtype="<f8", count=n, offset=offset).astype(np.float64)
        offset = end
        if e["kind"] == "block":
            shapes = [tuple(s) for s in e["shapes"]]
            blocks[e["name"]] = ParamBlock(shapes, vec)
        else:
            vectors[e["name"]] = vec
    if offset != len(data):
        raise CheckpointError(f"{path}: {len(data) - offset} trailing bytes")
    return blocks, vectors, header["metadata"]


def check_shapes(loaded, expected):
    """Refuse ``loaded`` blocks whose shape tables differ from ``expected`` (name -> shapes)."""
    for name, shapes in expected.items():
        if name not in loaded:
            raise CheckpointError(f"checkpoint has no block {name!r}")
        got = [tuple(s) for s in loaded[name].shapes]
        want = [tuple(s) for s in shapes]
        if got != want:
            raise CheckpointError(
                f"shape mismatch for {name!r}:\n  checkpoint: {got}\n  current config: {want}")


def config_hash(text):
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def save_estimator(path, estimator, metadata=None):
    """Checkpoint an estimator exposing ``get_state() -> (blocks, vectors, metadata)``."""
    blocks, vectors, meta = estimator.get_state()
    save_checkpoint(path, blocks, {**meta, **(metadata or {})}, vectors)


def load_estimator(path, estimator, **kwargs):
    """Restore ``estimator`` (already configured) from ``path``; returns the metadata."""
    blocks, vectors, meta = load_checkpoint(path)
    estimator.set_state(blocks, vectors, meta, **kwargs)
    return meta
