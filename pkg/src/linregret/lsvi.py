"""Least-squares value iteration with an elliptical UCB bonus (LSVI-UCB)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import GramState
from .mdp import LinearMdpEnv

__all__ = ["lsvi_beta", "union_bound_delta", "LsviPlan", "LsviUcb", "lsvi_act", "greedy_action"]


def _check_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise ValueError(f"confidence parameter delta must lie in (0, 1), got {delta}")


def lsvi_beta(d: int, H: int, T: int, delta: float, scale: float = 1.0) -> float:
    """Bonus coefficient ``scale * 78 d H sqrt(ln(2 d T / delta))``."""
    _check_delta(delta)
    if d <= 0 or H <= 0 or T <= 0:
        raise ValueError("d, H and T must be positive")
    return scale * 78.0 * d * H * math.sqrt(math.log(2.0 * d * T / delta))


def union_bound_delta(K: int, H: int) -> float:
    """The expected-regret preset ``1 / (2 K (K+1) H^3)``."""
    return 1.0 / (2.0 * K * (K + 1) * H ** 3)


def greedy_action(q_row: np.ndarray) -> int:
    """First maximizing index."""
    return int(np.argmax(q_row))


@dataclass(frozen=True, eq=False)
class LsviPlan:
    """Optimistic Q functions for one episode.

    ``q`` and ``bonus`` are materialized (H, S, A) tables; ``weights`` is
    (H, d) and ``inverses`` the (H, d, d) Gram inverses used for the bonus.
    """

    q: np.ndarray
    bonus: np.ndarray
    weights: np.ndarray
    inverses: np.ndarray
    beta: float
    cap: float
    episode: int

    def q_function(self, h: int):
        """Closed-form ``Q_h(phi) = min(w^T phi + beta ||phi||_{Lambda^-1}, H)``."""
        w, inv, beta, cap = self.weights[h], self.inverses[h], self.beta, self.cap

        def q(phi):
            phi = np.asarray(phi, dtype=np.float64)
            quad = max(float(phi @ inv @ phi), 0.0)
            return min(float(w @ phi) + beta * math.sqrt(quad), cap)

        return q

    def policy(self) -> np.ndarray:
        return np.argmax(self.q, axis=-1)


def lsvi_act(plan, s: int, h: int) -> int:
    return greedy_action(plan.q[h, s])


class LsviUcb:
    """LSVI-UCB agent on a finite linear MDP.

    Transitions are stored both as a replay list and as visit counts
    ``N[h, s, a, s']``. Because states are enumerable, the regression target
    vector ``sum_i phi_i (r_i + max_a Q_{h+1}(s'_i, a))`` is recomputed every
    episode from the counts, which is the same sum as iterating the replay.
    """

    def __init__(self, env: LinearMdpEnv, beta: float, lam: float = 1.0):
        if beta < 0:
            raise ValueError("beta must be non-negative")
        self.env = env
        self.beta = float(beta)
        self.lam = float(lam)
        H, S, A, d = env.H, env.S, env.A, env.d
        self.grams = [GramState(d, lam) for _ in range(H)]
        self.counts = np.zeros((H, S, A, S))
        self.visits = np.zeros((H, S, A))
        self.replay: list[tuple[np.ndarray, np.ndarray]] = []
        self._phi = env.features
        self._rewards = env.reward_table()

    @property
    def episode(self) -> int:
        """Index (1-based) of the episode the next plan is for."""
        return len(self.replay) + 1

    def plan(self) -> LsviPlan:
        env = self.env
        H, S, A, d = env.H, env.S, env.A, env.d
        phi = self._phi
        cap = float(H)
        q = np.zeros((H, S, A))
        bonus = np.zeros((H, S, A))
        weights = np.zeros((H, d))
        inverses = np.zeros((H, d, d))
        v_next = np.zeros(S)
        for h in range(H - 1, -1, -1):
            gram = self.grams[h]
            coef = self.visits[h] * self._rewards[h] + self.counts[h] @ v_next
            b = np.einsum("sa,sad->d", coef, phi)
            w = gram.ridge_solve(b)
            bonus[h] = self.beta * np.sqrt(gram.quadratic_forms(phi))
            q[h] = np.minimum(phi @ w + bonus[h], cap)
            weights[h] = w
            inverses[h] = gram.inverse
            v_next = q[h].max(axis=1)
        return LsviPlan(q, bonus, weights, inverses, self.beta, cap, self.episode)

    def regression_targets(self, plan: LsviPlan, h: int) -> np.ndarray:
        """Per-sample targets ``r_h + max_a Q_{h+1}(s', a)`` over the replay."""
        if not self.replay:
            return np.zeros(0)
        states = np.array([s for s, _ in self.replay])
        actions = np.array([a for _, a in self.replay])
        r = self._rewards[h, states[:, h], actions[:, h]]
        if h + 1 < self.env.H:
            return r + plan.q[h + 1, states[:, h + 1]].max(axis=1)
        return r

    def observe(self, states, actions) -> None:
        """Record one trajectory: ``states`` has H+1 entries, ``actions`` H."""
        H = self.env.H
        states = np.asarray(states, dtype=np.int64)
        actions = np.asarray(actions, dtype=np.int64)
        if states.shape != (H + 1,) or actions.shape != (H,):
            raise ValueError(f"trajectory must have {H + 1} states and {H} actions")
        for h in range(H):
            s, a, s2 = states[h], actions[h], states[h + 1]
            self.grams[h].rank1_update(self._phi[s, a])
            self.counts[h, s, a, s2] += 1.0
            self.visits[h, s, a] += 1.0
        self.replay.append((states, actions))
