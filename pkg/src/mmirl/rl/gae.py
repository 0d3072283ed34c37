import numpy as np


def gae(rewards, values, gamma, lam, last_value=0.0):
    """Generalised advantage estimates along the last axis.

    ``rewards`` and ``values`` are (..., T); ``last_value`` bootstraps the
    step after the final one (0 for a terminal end). Returns
    ``(advantages, returns)`` with ``returns = advantages + values``.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    if rewards.shape != values.shape:
        raise ValueError(f"rewards {rewards.shape} and values {values.shape} must align")
    T = rewards.shape[-1]
    adv = np.zeros_like(rewards)
    next_value = np.broadcast_to(np.asarray(last_value, dtype=float), rewards.shape[:-1])
    running = np.zeros(rewards.shape[:-1])
    for t in range(T - 1, -1, -1):
        delta = rewards[..., t] + gamma * next_value - values[..., t]
        running = delta + gamma * lam * running
        adv[..., t] = running
        next_value = values[..., t]
    return adv, adv + values
