"""UCRL with value-targeted model estimation (UCRL-VTR), time-inhomogeneous."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linalg import GramState
from .lsvi import greedy_action
from .mdp import LinearMixtureEnv

__all__ = ["vtr_beta", "VtrPlan", "UcrlVtr", "vtr_act"]


def vtr_beta(k: int, d: int, H: int, c_theta: float, delta: float, scale: float = 1.0) -> float:
    """``scale * 4 C H sqrt(d ln(1 + H k) ln^2((k+1)^2 H / delta))``."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"confidence parameter delta must lie in (0, 1), got {delta}")
    if k < 1:
        raise ValueError("episode index k starts at 1")
    log_a = math.log(1.0 + H * k)
    log_b = math.log((k + 1) ** 2 * H / delta)
    return scale * 4.0 * c_theta * H * math.sqrt(d * log_a * log_b ** 2)


@dataclass(frozen=True, eq=False)
class VtrPlan:
    theta: np.ndarray     # (H, d) estimates used for this episode
    q: np.ndarray         # (H, S, A), unclipped
    v: np.ndarray         # (H+1, S), clipped when the agent clips
    phi_v: np.ndarray     # (H, S, A, d) value features phi_{V_{h+1}}
    bonus: np.ndarray     # (H, S, A)
    beta: float
    episode: int

    def policy(self) -> np.ndarray:
        return np.argmax(self.q, axis=-1)


def vtr_act(plan, s: int, h: int) -> int:
    return greedy_action(plan.q[h, s])


class UcrlVtr:
    """UCRL-VTR on a finite linear mixture MDP with known rewards.

    With ``clip`` on, planned values are clipped to ``[0, H - h]`` (0-based
    step ``h``), i.e. the range of the true value function.
    """

    def __init__(self, env: LinearMixtureEnv, delta: float = 0.01, beta_scale: float = 1.0,
                 lam: Optional[float] = None, clip: bool = True, c_theta: Optional[float] = None):
        self.env = env
        self.delta = float(delta)
        self.beta_scale = float(beta_scale)
        self.lam = float(env.H ** 2 * env.d if lam is None else lam)
        self.clip = bool(clip)
        self.c_theta = float(env.c_theta if c_theta is None else c_theta)
        vtr_beta(1, env.d, env.H, self.c_theta, self.delta)  # validates delta
        self.grams = [GramState(env.d, self.lam) for _ in range(env.H)]
        self.targets = np.zeros((env.H, env.d))
        self.k = 1

    def beta(self, k: Optional[int] = None) -> float:
        k = self.k if k is None else k
        return vtr_beta(k, self.env.d, self.env.H, self.c_theta, self.delta, self.beta_scale)

    def estimates(self) -> np.ndarray:
        return np.array([g.ridge_solve(b) for g, b in zip(self.grams, self.targets)])

    def plan(self, theta: Optional[np.ndarray] = None, beta: Optional[float] = None) -> VtrPlan:
        """Backward optimistic planning; ``theta``/``beta`` override the estimates."""
        env = self.env
        H, S, A, d = env.H, env.S, env.A, env.d
        theta = self.estimates() if theta is None else np.asarray(theta, dtype=np.float64)
        beta = self.beta() if beta is None else float(beta)
        r = env.rewards
        q = np.zeros((H, S, A))
        v = np.zeros((H + 1, S))
        phi_v = np.zeros((H, S, A, d))
        bonus = np.zeros((H, S, A))
        for h in range(H - 1, -1, -1):
            phi_v[h] = env.value_features(v[h + 1])
            bonus[h] = beta * np.sqrt(self.grams[h].quadratic_forms(phi_v[h]))
            q[h] = r + phi_v[h] @ theta[h] + bonus[h]
            v[h] = q[h].max(axis=1)
            if self.clip:
                np.clip(v[h], 0.0, H - h, out=v[h])
        return VtrPlan(theta, q, v, phi_v, bonus, beta, self.k)

    def confidence_widths(self, plan: VtrPlan, theta_star: np.ndarray) -> np.ndarray:
        """``(theta* - theta_hat)^T Sigma (theta* - theta_hat)`` per step."""
        diff = np.asarray(theta_star) - plan.theta
        return np.array([diff[h] @ g.matrix @ diff[h] for h, g in enumerate(self.grams)])

    def observe(self, states, actions, plan: VtrPlan) -> None:
        H = self.env.H
        states = np.asarray(states, dtype=np.int64)
        actions = np.asarray(actions, dtype=np.int64)
        if states.shape != (H + 1,) or actions.shape != (H,):
            raise ValueError(f"trajectory must have {H + 1} states and {H} actions")
        for h in range(H):
            x = plan.phi_v[h, states[h], actions[h]]
            self.grams[h].rank1_update(x)
            self.targets[h] += plan.v[h + 1, states[h + 1]] * x
        self.k += 1
