"""Exact single-task adversarial IRL on small finite MDPs.

Occupancy measures and soft-optimal policies are computed by enumeration,
so the only approximation left is the discriminator's gradient descent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp


@dataclass
class TabularMDP:
    P: np.ndarray  # (S, A, S) transition probabilities
    reward: np.ndarray  # (S, A)
    gamma: float
    p0: np.ndarray  # (S,)

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float)
        self.reward = np.asarray(self.reward, dtype=float)
        self.p0 = np.asarray(self.p0, dtype=float)
        S, A, S2 = self.P.shape
        if S != S2 or self.reward.shape != (S, A) or self.p0.shape != (S,):
            raise ValueError("inconsistent MDP shapes")
        if not np.allclose(self.P.sum(-1), 1.0) or not np.isclose(self.p0.sum(), 1.0):
            raise ValueError("transition rows and p0 must be probability vectors")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("tabular MDPs need 0 < gamma < 1")

    @property
    def n_states(self):
        return self.P.shape[0]

    @property
    def n_actions(self):
        return self.P.shape[1]


def four_state_mdp(gamma=0.9):
    """Deterministic 4-state ring with 2 actions ("stay", "advance").

    Advancing from the last state wraps to the first; the true reward
    favours sitting in state 2 and penalises waiting in state 0.
    """
    S, A = 4, 2
    P = np.zeros((S, A, S))
    for s in range(S):
        P[s, 0, s] = 1.0
        P[s, 1, (s + 1) % S] = 1.0
    reward = np.array([[-1.0, 0.0], [0.0, 0.2], [1.0, 0.0], [0.0, 0.3]])
    return TabularMDP(P, reward, gamma, np.full(S, 0.25))


def soft_value_iteration(mdp, reward, tol=1e-12, max_iter=100_000, V0=None):
    """Entropy-regularised Bellman fixed point; returns (Q, V, pi)."""
    V = np.zeros(mdp.n_states) if V0 is None else np.array(V0, dtype=float)
    for _ in range(max_iter):
        Q = reward + mdp.gamma * mdp.P @ V
        V_new = logsumexp(Q, axis=1)
        if np.max(np.abs(V_new - V)) < tol:
            V = V_new
            break
        V = V_new
    Q = reward + mdp.gamma * mdp.P @ V
    return Q, V, np.exp(Q - V[:, None])


def hard_value_iteration(mdp, reward, tol=1e-12, max_iter=100_000):
    """Returns (Q, V, greedy action per state)."""
    V = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        Q = reward + mdp.gamma * mdp.P @ V
        V_new = Q.max(axis=1)
        if np.max(np.abs(V_new - V)) < tol:
            V = V_new
            break
        V = V_new
    Q = reward + mdp.gamma * mdp.P @ V
    return Q, V, np.argmax(Q, axis=1)


def occupancy(mdp, pi):
    """Normalised discounted state-action occupancy rho(s, a) of policy ``pi``."""
    P_pi = np.einsum("sa,sat->st", pi, mdp.P)
    d = np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * P_pi.T, (1.0 - mdp.gamma) * mdp.p0)
    return d[:, None] * pi


def tabular_airl(mdp, expert_pi, n_iterations=5000, lr=0.5, disc_steps=1):
    """Alternate discriminator gradient steps on the exact classification loss
    with an exact soft-optimal generator for the current reward ``f``.

    Returns (f, pi, history) where ``history`` holds the loss per iteration.
    """
    rho_E = occupancy(mdp, expert_pi)
    f = np.zeros((mdp.n_states, mdp.n_actions))
    _, V, pi = soft_value_iteration(mdp, f)
    history = []
    for _ in range(n_iterations):
        rho_G = occupancy(mdp, pi)
        log_pi = np.log(pi)
        for _ in range(disc_steps):
            D = expit(f - log_pi)
            # d/df of -sum rho_E log D - sum rho_G log(1 - D)
            grad = -rho_E * (1.0 - D) + rho_G * D
            f -= lr * grad
        D = expit(f - log_pi)
        history.append(float(-(rho_E * np.log(D)).sum() - (rho_G * np.log1p(-D)).sum()))
        # generator: maximise E[sum gamma^t (f - log pi)], i.e. soft-optimal under f
        _, V, pi = soft_value_iteration(mdp, f, V0=V)
    return f, pi, history
