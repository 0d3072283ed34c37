"""Helpers to externalise optimiser and RNG state for checkpoints."""

from __future__ import annotations

import copy

import numpy as np


def rng_state(gen):
    return copy.deepcopy(gen.bit_generator.state)


def set_rng_state(gen, state):
    gen.bit_generator.state = copy.deepcopy(state)


def pack_optimizers(opts):
    vectors, meta = {}, {}
    for name, opt in opts.items():
        vectors[f"{name}.adam_m"] = opt.state.m
        vectors[f"{name}.adam_v"] = opt.state.v
        meta[name] = {"t": opt.state.t, "skipped": opt.state.skipped, "lr": opt.lr}
    return vectors, meta


def unpack_optimizers(opts, vectors, meta):
    for name, opt in opts.items():
        opt.state.m[:] = np.asarray(vectors[f"{name}.adam_m"], dtype=float)
        opt.state.v[:] = np.asarray(vectors[f"{name}.adam_v"], dtype=float)
        opt.state.t = int(meta[name]["t"])
        opt.state.skipped = int(meta[name]["skipped"])
        opt.lr = float(meta[name]["lr"])


def load_blocks(targets, loaded):
    from .io.checkpoint import check_shapes

    check_shapes(loaded, {k: b.shapes for k, b in targets.items()})
    for name, block in targets.items():
        block.values[:] = loaded[name].values
        block.zero_grads()


def jsonable_params(params):
    out = {}
    for k, v in params.items():
        if isinstance(v, (int, float, str, bool)) or v is None:
            out[k] = v
        elif isinstance(v, (tuple, list)):
            out[k] = list(v)
    return out
