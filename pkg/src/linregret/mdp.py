"""Episodic MDP representations and instance constructors.

Three views of a finite episodic MDP are provided:

* :class:`TabularMdp` holds the explicit transition tensor ``P[h, s, a, s']``
  and rewards ``r[h, s, a]``. It backs the exact DP oracle.
* :class:`LinearMdpEnv` stores a feature map ``phi(s, a)``, per-step measures
  ``theta_h(s')`` and reward parameters ``mu_h`` so that
  ``P_h(s'|s,a) = <phi(s,a), theta_h(s')>`` and ``r_h(s,a) = <phi(s,a), mu_h>``.
* :class:`LinearMixtureEnv` stores triplet features ``phi(s'|s,a)`` and a
  per-step parameter ``theta*_h`` with ``P_h(s'|s,a) = <phi(s'|s,a), theta*_h>``
  and a known step-independent reward table.

Steps, states and actions are 0-based throughout; step ``h`` runs over
``0..H-1`` and value tables carry an extra terminal row ``H`` that is zero.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Union

import numpy as np

PROB_TOL = 1e-12

__all__ = [
    "PROB_TOL",
    "EnvValidationError",
    "TabularMdp",
    "LinearMdpEnv",
    "LinearMixtureEnv",
    "HardInstanceSpec",
    "transition_prob",
    "value_features",
    "make_hard_instance",
    "make_random_linear_mdp",
    "make_random_linear_mixture",
    "tabular_one_hot_embed",
    "hard_instance_actions",
    "as_tabular",
    "env_to_json",
    "env_from_json",
]


class EnvValidationError(ValueError):
    """Raised when environment parameters do not describe a valid MDP."""


def _frozen(arr, dtype=np.float64) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def _clean_probabilities(p: np.ndarray, what: str) -> np.ndarray:
    """Clamp float noise in [-PROB_TOL, 0) to zero; reject anything worse."""
    if not np.all(np.isfinite(p)):
        raise EnvValidationError(f"{what}: non-finite transition probability")
    worst = p.min(initial=0.0)
    if worst < -PROB_TOL:
        raise EnvValidationError(f"{what}: negative transition probability {worst:.3e}")
    sums = p.sum(axis=-1)
    err = np.abs(sums - 1.0).max(initial=0.0)
    if err > PROB_TOL:
        raise EnvValidationError(f"{what}: rows sum to 1 only within {err:.3e}")
    return np.clip(p, 0.0, 1.0)


def _check_distribution(p: np.ndarray, n: int) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (n,):
        raise EnvValidationError(f"initial distribution must have shape ({n},), got {p.shape}")
    if p.min() < -PROB_TOL or abs(p.sum() - 1.0) > PROB_TOL:
        raise EnvValidationError("initial distribution is not a probability vector")
    return np.clip(p, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Explicit finite-horizon MDP.

    ``transitions`` has shape (H, S, A, S) and ``rewards`` shape (H, S, A).
    """

    transitions: np.ndarray
    rewards: np.ndarray
    initial_distribution: np.ndarray
    tag: str = "tabular"
    seed: Optional[int] = None

    def __post_init__(self):
        P = np.asarray(self.transitions, dtype=np.float64)
        if P.ndim != 4 or P.shape[1] != P.shape[3]:
            raise EnvValidationError(f"transitions must have shape (H, S, A, S), got {P.shape}")
        R = np.asarray(self.rewards, dtype=np.float64)
        if R.shape != P.shape[:3]:
            raise EnvValidationError(f"rewards must have shape {P.shape[:3]}, got {R.shape}")
        if R.min() < 0.0 or R.max() > 1.0:
            raise EnvValidationError("rewards must lie in [0, 1]")
        P = _clean_probabilities(P, "tabular kernel")
        object.__setattr__(self, "transitions", _frozen(P))
        object.__setattr__(self, "rewards", _frozen(R))
        mu0 = _check_distribution(self.initial_distribution, P.shape[1])
        object.__setattr__(self, "initial_distribution", _frozen(mu0))

    @property
    def H(self) -> int:
        return self.transitions.shape[0]

    @property
    def S(self) -> int:
        return self.transitions.shape[1]

    @property
    def A(self) -> int:
        return self.transitions.shape[2]

    def transition_tensor(self) -> np.ndarray:
        return self.transitions

    def reward_table(self) -> np.ndarray:
        return self.rewards

    def to_tabular(self) -> "TabularMdp":
        return self


@dataclass(frozen=True, eq=False)
class LinearMdpEnv:
    """Linear MDP with features (S, A, d), measures (H, S, d), rewards (H, d)."""

    features: np.ndarray
    measures: np.ndarray
    reward_params: np.ndarray
    initial_distribution: np.ndarray
    tag: str = "linear"
    seed: Optional[int] = None
    normalization_issues: tuple = field(init=False, default=())

    def __post_init__(self):
        phi = np.asarray(self.features, dtype=np.float64)
        theta = np.asarray(self.measures, dtype=np.float64)
        mu = np.asarray(self.reward_params, dtype=np.float64)
        if phi.ndim != 3:
            raise EnvValidationError(f"features must have shape (S, A, d), got {phi.shape}")
        S, A, d = phi.shape
        if theta.ndim != 3 or theta.shape[1:] != (S, d):
            raise EnvValidationError(f"measures must have shape (H, {S}, {d}), got {theta.shape}")
        H = theta.shape[0]
        if mu.shape != (H, d):
            raise EnvValidationError(f"reward_params must have shape ({H}, {d}), got {mu.shape}")
        for name, arr in (("features", phi), ("measures", theta), ("reward_params", mu)):
            if not np.all(np.isfinite(arr)):
                raise EnvValidationError(f"{name} contain non-finite values")
        object.__setattr__(self, "features", _frozen(phi))
        object.__setattr__(self, "measures", _frozen(theta))
        object.__setattr__(self, "reward_params", _frozen(mu))
        object.__setattr__(self, "initial_distribution",
                           _frozen(_check_distribution(self.initial_distribution, S)))
        # Force validation of the induced kernel and rewards now.
        self.transition_tensor()
        R = self.reward_table()
        if R.min() < -PROB_TOL or R.max() > 1.0 + PROB_TOL:
            raise EnvValidationError("<phi(s,a), mu_h> must lie in [0, 1]")
        object.__setattr__(self, "normalization_issues", self._normalization_issues())

    @property
    def H(self) -> int:
        return self.measures.shape[0]

    @property
    def S(self) -> int:
        return self.features.shape[0]

    @property
    def A(self) -> int:
        return self.features.shape[1]

    @property
    def d(self) -> int:
        return self.features.shape[2]

    @cached_property
    def _kernel(self) -> np.ndarray:
        P = np.einsum("sad,htd->hsat", self.features, self.measures)
        return _frozen(_clean_probabilities(P, "linear MDP kernel"))

    @cached_property
    def _rewards(self) -> np.ndarray:
        R = np.einsum("sad,hd->hsa", self.features, self.reward_params)
        return _frozen(np.clip(R, 0.0, 1.0))

    def transition_tensor(self) -> np.ndarray:
        return self._kernel

    def reward_table(self) -> np.ndarray:
        return self._rewards

    def normalization_norms(self) -> dict:
        """Norms entering the boundedness conditions that accompany the linear MDP model.

        ``measure_sum`` is ``max_h ||sum_s' theta_h(s')||_2``;
        ``measure_total`` is ``max_h sum_s' ||theta_h(s')||_2`` (the
        total-variation style reading of the same condition).
        """
        return {
            "feature": float(np.linalg.norm(self.features, axis=-1).max()),
            "reward": float(np.linalg.norm(self.reward_params, axis=-1).max()),
            "measure_sum": float(np.linalg.norm(self.measures.sum(axis=1), axis=-1).max()),
            "measure_total": float(np.linalg.norm(self.measures, axis=-1).sum(axis=1).max()),
        }

    def _normalization_issues(self) -> tuple:
        norms = self.normalization_norms()
        root_d = np.sqrt(self.d) * (1.0 + 1e-12)
        limits = {"feature": 1.0 + 1e-12, "reward": root_d,
                  "measure_sum": root_d, "measure_total": root_d}
        return tuple(k for k in ("feature", "reward", "measure_sum", "measure_total")
                     if norms[k] > limits[k])

    @property
    def conforming_normalization(self) -> bool:
        """True when the feature, reward and summed-measure norm bounds hold."""
        return not any(k in self.normalization_issues
                       for k in ("feature", "reward", "measure_sum"))

    def to_tabular(self) -> TabularMdp:
        return TabularMdp(self.transition_tensor(), self.reward_table(),
                          self.initial_distribution, tag=self.tag, seed=self.seed)


@dataclass(frozen=True, eq=False)
class LinearMixtureEnv:
    """Linear mixture MDP with triplet features (S, A, S, d) and theta (H, d)."""

    triplet_features: np.ndarray
    theta: np.ndarray
    rewards: np.ndarray
    c_theta: float
    initial_distribution: np.ndarray
    tag: str = "mixture"
    seed: Optional[int] = None

    def __post_init__(self):
        phi = np.asarray(self.triplet_features, dtype=np.float64)
        theta = np.asarray(self.theta, dtype=np.float64)
        r = np.asarray(self.rewards, dtype=np.float64)
        if phi.ndim != 4 or phi.shape[0] != phi.shape[2]:
            raise EnvValidationError(f"triplet_features must have shape (S, A, S, d), got {phi.shape}")
        S, A, _, d = phi.shape
        if theta.ndim != 2 or theta.shape[1] != d:
            raise EnvValidationError(f"theta must have shape (H, {d}), got {theta.shape}")
        if r.shape != (S, A):
            raise EnvValidationError(f"rewards must have shape ({S}, {A}), got {r.shape}")
        if r.min() < 0.0 or r.max() > 1.0:
            raise EnvValidationError("rewards must lie in [0, 1]")
        if not (self.c_theta > 0):
            raise EnvValidationError("c_theta must be positive")
        norms = np.linalg.norm(theta, axis=1)
        if norms.max() > self.c_theta * (1.0 + 1e-12):
            raise EnvValidationError(f"||theta*_h|| = {norms.max():.6g} exceeds C_theta = {self.c_theta:.6g}")
        object.__setattr__(self, "triplet_features", _frozen(phi))
        object.__setattr__(self, "theta", _frozen(theta))
        object.__setattr__(self, "rewards", _frozen(r))
        object.__setattr__(self, "c_theta", float(self.c_theta))
        object.__setattr__(self, "initial_distribution",
                           _frozen(_check_distribution(self.initial_distribution, S)))
        self.transition_tensor()

    @property
    def H(self) -> int:
        return self.theta.shape[0]

    @property
    def S(self) -> int:
        return self.triplet_features.shape[0]

    @property
    def A(self) -> int:
        return self.triplet_features.shape[1]

    @property
    def d(self) -> int:
        return self.triplet_features.shape[3]

    @cached_property
    def _kernel(self) -> np.ndarray:
        P = np.einsum("satd,hd->hsat", self.triplet_features, self.theta)
        return _frozen(_clean_probabilities(P, "linear mixture kernel"))

    def transition_tensor(self) -> np.ndarray:
        return self._kernel

    def reward_table(self) -> np.ndarray:
        """Rewards broadcast to shape (H, S, A)."""
        return np.broadcast_to(self.rewards, (self.H, self.S, self.A))

    def value_features(self, V) -> np.ndarray:
        """phi_V(s, a) = sum_s' phi(s'|s,a) V(s') for every (s, a); shape (S, A, d)."""
        V = np.asarray(V, dtype=np.float64)
        if V.shape != (self.S,):
            raise ValueError(f"value vector must have shape ({self.S},), got {V.shape}")
        if not np.all(np.isfinite(V)):
            raise ValueError("value vector must be finite")
        return np.einsum("satd,t->sad", self.triplet_features, V)

    def to_tabular(self) -> TabularMdp:
        return TabularMdp(self.transition_tensor(), self.reward_table(),
                          self.initial_distribution, tag=self.tag, seed=self.seed)


Env = Union[TabularMdp, LinearMdpEnv, LinearMixtureEnv]


def as_tabular(env: Env) -> TabularMdp:
    return env.to_tabular()


def transition_prob(env: Env, h: int, s: int, a: int, s_next: int) -> float:
    """Probability of moving from ``s`` to ``s_next`` under ``a`` at step ``h``."""
    for name, idx, n in (("h", h, env.H), ("s", s, env.S), ("a", a, env.A), ("s'", s_next, env.S)):
        if not 0 <= idx < n:
            raise IndexError(f"{name}={idx} out of range [0, {n})")
    return float(env.transition_tensor()[h, s, a, s_next])


def value_features(env: LinearMixtureEnv, V, s: int, a: int) -> np.ndarray:
    if not (0 <= s < env.S and 0 <= a < env.A):
        raise IndexError(f"(s, a) = ({s}, {a}) out of range")
    V = np.asarray(V, dtype=np.float64)
    if V.shape != (env.S,):
        raise ValueError(f"value vector must have shape ({env.S},), got {V.shape}")
    if not np.all(np.isfinite(V)):
        raise ValueError("value vector must be finite")
    return env.triplet_features[s, a].T @ V


# -- hard instance -----------------------------------------------------------

@dataclass(frozen=True)
class HardInstanceSpec:
    """Parameters of the absorbing-state hard instance.

    ``signs`` is an (H, d-1) array of +/-1; ``mu_h = gap * signs[h]``. When
    omitted every step uses the alternating pattern (+1, -1, +1, ...).
    ``relaxed`` drops the lower-bound coupling ``3(d-1) gap <= escape`` and
    only requires the transition probabilities to be valid.
    """

    d: int
    H: int
    gap: float
    escape: Optional[float] = None
    signs: Optional[tuple] = None
    relaxed: bool = False

    @property
    def delta(self) -> float:
        return 1.0 / self.H if self.escape is None else float(self.escape)

    def sign_matrix(self) -> np.ndarray:
        if self.signs is None:
            row = np.array([1.0 if i % 2 == 0 else -1.0 for i in range(self.d - 1)])
            return np.tile(row, (self.H, 1))
        sg = np.asarray(self.signs, dtype=np.float64)
        if sg.shape != (self.H, self.d - 1) or not np.all(np.abs(sg) == 1.0):
            raise EnvValidationError(f"signs must be an ({self.H}, {self.d - 1}) array of +/-1")
        return sg

    def mu(self) -> np.ndarray:
        return self.gap * self.sign_matrix()

    def validate(self) -> None:
        if self.d < 2:
            raise EnvValidationError("hard instance needs d >= 2")
        if self.H < 3:
            raise EnvValidationError("hard instance needs H >= 3")
        if not self.gap > 0:
            raise EnvValidationError("gap parameter must be positive")
        delta = self.delta
        if not 0 < delta <= 1.0 / 3.0 + 1e-15:
            raise EnvValidationError(f"escape probability {delta} must lie in (0, 1/3]")
        spread = (self.d - 1) * self.gap
        if not self.relaxed and 3 * spread > delta + 1e-15:
            raise EnvValidationError(
                f"infeasible hard instance: 3(d-1)*gap = {3 * spread:.6g} > escape = {delta:.6g}")
        if delta - spread < 0 or delta + spread > 1:
            raise EnvValidationError("escape +/- (d-1)*gap leaves [0, 1]")
        self.sign_matrix()


def hard_instance_actions(d: int) -> np.ndarray:
    """Action vectors {-1, 1}^(d-1) in lexicographic order, shape (2^(d-1), d-1)."""
    return np.array(list(itertools.product((-1.0, 1.0), repeat=d - 1)))


def make_hard_instance(spec: HardInstanceSpec):
    """Build the hard instance and its exact linear and linear-mixture views.

    States ``0..H-1`` are the chain states, ``H`` is the zero-reward absorbing
    state and ``H+1`` the rewarding absorbing state. From chain state ``j`` at
    step ``h`` the next state is ``j+1`` with probability
    ``1 - delta - <mu_h, a>`` and ``H+1`` otherwise.

    The linear view uses state-indexed feature blocks
    ``phi(s_j, a) = e_j (x) (1, a) / sqrt(d)`` of dimension ``(H+2) d``, which
    reproduces the kernel exactly at every state. The mixture view has
    dimension ``d`` with ``theta*_h = sqrt(d) (1, mu_h)``.

    Returns ``(TabularMdp, LinearMdpEnv, LinearMixtureEnv)``.
    """
    spec.validate()
    d, H = spec.d, spec.H
    delta = spec.delta
    mu = spec.mu()
    acts = hard_instance_actions(d)
    A = acts.shape[0]
    S = H + 2
    lose, win = H, H + 1
    root_d = np.sqrt(d)

    P = np.zeros((H, S, A, S))
    for h in range(H):
        escape = delta + acts @ mu[h]
        for j in range(H):
            P[h, j, :, j + 1] = 1.0 - escape
            P[h, j, :, win] = escape
        P[h, lose, :, lose] = 1.0
        P[h, win, :, win] = 1.0
    R = np.zeros((H, S, A))
    R[:, win, :] = 1.0
    init = np.zeros(S)
    init[0] = 1.0
    tag = f"hard(d={d},H={H},gap={spec.gap!r},escape={delta!r})"
    tab = TabularMdp(P, R, init, tag=tag)

    # linear view: block j holds (1, a) / sqrt(d)
    dl = S * d
    phi = np.zeros((S, A, dl))
    local = np.hstack([np.ones((A, 1)), acts]) / root_d
    for j in range(S):
        phi[j, :, j * d:(j + 1) * d] = local
    theta = np.zeros((H, S, dl))
    for h in range(H):
        stay = root_d * np.concatenate([[1.0 - delta], -mu[h]])
        jump = root_d * np.concatenate([[delta], mu[h]])
        for j in range(H):
            theta[h, j + 1, j * d:(j + 1) * d] += stay
            theta[h, win, j * d:(j + 1) * d] += jump
        for j in (lose, win):
            theta[h, j, j * d] = root_d
    reward = np.zeros((H, dl))
    reward[:, win * d] = root_d
    lin = LinearMdpEnv(phi, theta, reward, init, tag=tag)

    # mixture view
    trip = np.zeros((S, A, S, d))
    for j in range(H):
        trip[j, :, j + 1, 0] = 1.0 - delta
        trip[j, :, j + 1, 1:] = -acts
        trip[j, :, win, 0] = delta
        trip[j, :, win, 1:] = acts
    for j in (lose, win):
        trip[j, :, j, 0] = 1.0
    trip /= root_d
    theta_star = root_d * np.hstack([np.ones((H, 1)), mu])
    c_theta = float(np.linalg.norm(theta_star, axis=1).max())
    mix = LinearMixtureEnv(trip, theta_star, R[0], c_theta, init, tag=tag)
    return tab, lin, mix


# -- random instances ---------------------------------------------------------

def _check_dims(d, S, A, H):
    for name, v in (("d", d), ("S", S), ("A", A), ("H", H)):
        if int(v) != v or v < 1:
            raise EnvValidationError(f"{name} must be a positive integer, got {v!r}")


def make_random_linear_mdp(d: int, S: int, A: int, H: int, seed: int) -> LinearMdpEnv:
    """Random linear MDP built as a feature-weighted mixture of d anchor kernels."""
    _check_dims(d, S, A, H)
    rng = np.random.default_rng(seed)
    anchors = rng.dirichlet(np.ones(S), size=(H, d))        # (H, d, S)
    phi = rng.dirichlet(np.ones(d), size=(S, A))             # (S, A, d) on the simplex
    mu = rng.uniform(0.0, 1.0, size=(H, d))
    init = rng.dirichlet(np.ones(S))
    measures = np.transpose(anchors, (0, 2, 1))              # theta_h(s')_j = p_j(s'|h)
    return LinearMdpEnv(phi, measures, mu, init, tag="random-linear", seed=seed)


def make_random_linear_mixture(d: int, S: int, A: int, H: int, seed: int) -> LinearMixtureEnv:
    """Random linear mixture of d base kernels, scaled so that ||phi_V|| <= 1."""
    _check_dims(d, S, A, H)
    rng = np.random.default_rng(seed)
    base = rng.dirichlet(np.ones(S), size=(d, S, A))         # (d, S, A, S)
    weights = rng.dirichlet(np.ones(d), size=H)              # (H, d)
    rewards = rng.uniform(0.0, 1.0, size=(S, A))
    init = rng.dirichlet(np.ones(S))
    root_d = np.sqrt(d)
    trip = np.transpose(base, (1, 2, 3, 0)) / root_d
    return LinearMixtureEnv(trip, root_d * weights, rewards, float(root_d), init,
                            tag="random-mixture", seed=seed)


def tabular_one_hot_embed(tab: TabularMdp) -> LinearMdpEnv:
    """Embed a tabular MDP as a linear MDP with one-hot features, d = S*A."""
    H, S, A = tab.H, tab.S, tab.A
    d = S * A
    phi = np.eye(d).reshape(S, A, d)
    # theta_h(s')[s*A + a] = P_h(s'|s,a)
    measures = np.transpose(tab.transitions.reshape(H, d, S), (0, 2, 1))
    mu = tab.rewards.reshape(H, d)
    return LinearMdpEnv(phi, measures, mu, tab.initial_distribution,
                        tag=f"one-hot({tab.tag})", seed=tab.seed)


# -- serialization ------------------------------------------------------------

def _env_payload(env: Env) -> dict:
    if isinstance(env, TabularMdp):
        kind = "tabular"
        arrays = {"transitions": env.transitions, "rewards": env.rewards}
        extra = {}
    elif isinstance(env, LinearMdpEnv):
        kind = "linear"
        arrays = {"features": env.features, "measures": env.measures,
                  "reward_params": env.reward_params}
        extra = {"d": env.d}
    elif isinstance(env, LinearMixtureEnv):
        kind = "mixture"
        arrays = {"triplet_features": env.triplet_features, "theta": env.theta,
                  "rewards": env.rewards}
        extra = {"d": env.d, "c_theta": env.c_theta}
    else:
        raise TypeError(f"cannot serialize {type(env).__name__}")
    dims = {"H": env.H, "S": env.S, "A": env.A, **extra}
    payload = {
        "kind": kind,
        "tag": env.tag,
        "seed": env.seed,
        "dims": dims,
        "initial_distribution": env.initial_distribution.tolist(),
    }
    for name, arr in arrays.items():
        payload[name] = {"shape": list(arr.shape), "data": arr.ravel(order="C").tolist()}
    return payload


def env_to_json(env: Env) -> str:
    """Serialize an environment; floats use shortest round-trip repr."""
    return json.dumps(_env_payload(env), sort_keys=True)


def env_from_json(text: str) -> Env:
    doc = json.loads(text)

    def arr(name):
        blob = doc[name]
        return np.array(blob["data"], dtype=np.float64).reshape(blob["shape"])

    init = np.array(doc["initial_distribution"], dtype=np.float64)
    kind = doc["kind"]
    if kind == "tabular":
        return TabularMdp(arr("transitions"), arr("rewards"), init, tag=doc["tag"], seed=doc["seed"])
    if kind == "linear":
        return LinearMdpEnv(arr("features"), arr("measures"), arr("reward_params"), init,
                            tag=doc["tag"], seed=doc["seed"])
    if kind == "mixture":
        return LinearMixtureEnv(arr("triplet_features"), arr("theta"), arr("rewards"),
                                doc["dims"]["c_theta"], init, tag=doc["tag"], seed=doc["seed"])
    raise EnvValidationError(f"unknown environment kind {kind!r}")
