"""Exact finite-horizon dynamic programming on enumerable MDPs."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .mdp import as_tabular

GAP_ZERO_TOL = 1e-9

__all__ = [
    "GAP_ZERO_TOL",
    "ExactSolution",
    "PolicyValue",
    "GapUndefinedError",
    "solve_optimal",
    "evaluate_policy",
    "episode_regret",
    "expected_gap_sum",
    "greedy_policy",
    "policy_matrix",
]


class GapUndefinedError(RuntimeError):
    """Raised when a diagnostic needs gap_min but every gap is zero."""


@dataclass(frozen=True, eq=False)
class ExactSolution:
    """Optimal tables; ``q`` is (H+1, S, A), ``v`` is (H+1, S), row H is zero."""

    q: np.ndarray
    v: np.ndarray
    policy: np.ndarray
    gaps: np.ndarray
    gap_min: float

    @property
    def H(self) -> int:
        return self.policy.shape[0]

    def require_gap_min(self) -> float:
        if not np.isfinite(self.gap_min):
            raise GapUndefinedError("gap_min is undefined: all sub-optimality gaps are zero")
        return self.gap_min

    def to_json(self) -> str:
        return json.dumps({
            "q": self.q.tolist(),
            "v": self.v.tolist(),
            "policy": self.policy.tolist(),
            "gaps": self.gaps.tolist(),
            "gap_min": self.gap_min if np.isfinite(self.gap_min) else None,
        }, sort_keys=True)


@dataclass(frozen=True, eq=False)
class PolicyValue:
    q: np.ndarray
    v: np.ndarray


def greedy_policy(q: np.ndarray) -> np.ndarray:
    """Argmax over the last axis; ties go to the lowest action index."""
    return np.argmax(q, axis=-1)


def solve_optimal(env) -> ExactSolution:
    tab = as_tabular(env)
    P, R = tab.transitions, tab.rewards
    H, S, A = R.shape
    q = np.zeros((H + 1, S, A))
    v = np.zeros((H + 1, S))
    for h in range(H - 1, -1, -1):
        q[h] = R[h] + P[h] @ v[h + 1]
        v[h] = q[h].max(axis=1)
    policy = greedy_policy(q[:H])
    gaps = v[:H, :, None] - q[:H]
    positive = gaps[gaps > GAP_ZERO_TOL]
    gap_min = float(positive.min()) if positive.size else float("inf")
    for arr in (q, v, policy, gaps):
        arr.setflags(write=False)
    return ExactSolution(q, v, policy, gaps, gap_min)


def policy_matrix(policy, H: int, S: int, A: int) -> np.ndarray:
    """Normalize a policy to action probabilities of shape (H, S, A).

    Accepts a deterministic table of action indices (H, S) or a stochastic
    table (H, S, A).
    """
    pol = np.asarray(policy)
    if pol.shape == (H, S):
        if not np.issubdtype(pol.dtype, np.integer):
            if not np.all(pol == np.round(pol)):
                raise ValueError("deterministic policy must hold integer action indices")
            pol = pol.astype(np.int64)
        if pol.min() < 0 or pol.max() >= A:
            raise ValueError(f"policy action index outside [0, {A})")
        mat = np.zeros((H, S, A))
        np.put_along_axis(mat, pol[..., None], 1.0, axis=-1)
        return mat
    if pol.shape == (H, S, A):
        pol = pol.astype(np.float64)
        if pol.min() < 0 or np.abs(pol.sum(axis=-1) - 1.0).max() > 1e-12:
            raise ValueError("stochastic policy rows must be probability vectors")
        return pol
    raise ValueError(f"policy must have shape ({H}, {S}) or ({H}, {S}, {A}), got {pol.shape}")


def evaluate_policy(env, policy) -> PolicyValue:
    tab = as_tabular(env)
    P, R = tab.transitions, tab.rewards
    H, S, A = R.shape
    pol = np.asarray(policy)
    q = np.zeros((H + 1, S, A))
    v = np.zeros((H + 1, S))
    if pol.shape == (H, S) and np.issubdtype(pol.dtype, np.integer):
        # deterministic fast path: pick the chosen action instead of a weighted sum
        if pol.min() < 0 or pol.max() >= A:
            raise ValueError(f"policy action index outside [0, {A})")
        rows = np.arange(S)
        for h in range(H - 1, -1, -1):
            q[h] = R[h] + P[h] @ v[h + 1]
            v[h] = q[h, rows, pol[h]]
        return PolicyValue(q, v)
    pi = policy_matrix(pol, H, S, A)
    for h in range(H - 1, -1, -1):
        q[h] = R[h] + P[h] @ v[h + 1]
        v[h] = (pi[h] * q[h]).sum(axis=1)
    return PolicyValue(q, v)


def episode_regret(sol: ExactSolution, pv: PolicyValue, s1: int) -> float:
    return float(sol.v[0, s1] - pv.v[0, s1])


def expected_gap_sum(env, policy, s1: int, sol: ExactSolution | None = None) -> float:
    """E[sum_h gap_h(s_h, a_h)] under ``policy`` from ``s1``, by forward propagation."""
    tab = as_tabular(env)
    if sol is None:
        sol = solve_optimal(tab)
    P = tab.transitions
    H, S, A = tab.rewards.shape
    pi = policy_matrix(policy, H, S, A)
    occ = np.zeros(S)
    occ[s1] = 1.0
    total = 0.0
    for h in range(H):
        joint = occ[:, None] * pi[h]
        total += float((joint * sol.gaps[h]).sum())
        occ = np.einsum("sa,sat->t", joint, P[h])
    return total
