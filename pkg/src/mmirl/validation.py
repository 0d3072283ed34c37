"""Input checks shared by the estimators."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array


def check_trajectory_array(x, name, width=None, length=None):
    """(N, T, width) float array with finite entries."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3:
        raise ValueError(f"{name} must be (n_trajectories, length, dim), got shape {x.shape}")
    n, t, d = x.shape
    check_array(x.reshape(n * t, d) if n * t else np.zeros((1, d)), ensure_all_finite=True,
                input_name=name)
    if width is not None and d != width:
        raise ValueError(f"{name} has width {d}, expected {width}")
    if length is not None and t != length:
        raise ValueError(f"{name} has length {t}, expected {length}")
    return x


def check_demos(demos, env=None):
    """Coerce demonstrations to ``(states, actions)`` arrays of shape (N, T, .).

    Accepts a ``(states, actions)`` pair or a sequence of records with
    ``states`` and ``actions`` attributes (all of equal length).
    """
    if isinstance(demos, tuple) and len(demos) == 2:
        states, actions = demos
    else:
        demos = list(demos)
        if not demos:
            raise ValueError("no demonstrations given")
        lengths = {len(d.states) for d in demos}
        if len(lengths) != 1:
            raise ValueError(f"demonstrations must share one length, got {sorted(lengths)}")
        states = np.stack([np.asarray(d.states, dtype=float) for d in demos])
        actions = np.stack([np.asarray(d.actions, dtype=float) for d in demos])
    sdim = adim = None
    if env is not None:
        sdim, adim = env.spec.state_dim, env.spec.action_dim
    states = check_trajectory_array(states, "states", sdim)
    actions = check_trajectory_array(actions, "actions", adim, length=states.shape[1])
    if actions.shape[0] != states.shape[0]:
        raise ValueError(f"{states.shape[0]} state sequences but {actions.shape[0]} action sequences")
    if states.shape[0] == 0 or states.shape[1] == 0:
        raise ValueError("demonstrations are empty")
    return states, actions
