"""Seeded episode loop with exact regret accounting."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from ..lsvi import LsviUcb, lsvi_beta
from ..mdp import as_tabular
from ..oracle import ExactSolution, evaluate_policy, expected_gap_sum, solve_optimal
from ..vtr import UcrlVtr
from .config import ExperimentConfig
from .diagnostics import ridge_objective_is_minimal

log = logging.getLogger(__name__)

OPTIMISM_TOL = 1e-9
DECOMPOSITION_TOL = 1e-10

__all__ = ["RegretTrace", "RunFailure", "episode_rng", "run_single", "run_experiment", "make_agent",
           "sweep", "tune_beta_scale"]


class RunFailure(RuntimeError):
    """A run aborted because an exact-oracle check failed."""


def episode_rng(seed: int, episode: int) -> np.random.Generator:
    """Independent PCG64 stream for episode ``episode`` of run ``seed``.

    Streams are keyed by ``SeedSequence(seed, spawn_key=(episode,))`` so the
    trajectory sampled in an episode depends only on (seed, episode, policy).
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(episode,))))


def _sample(rng: np.random.Generator, probs: np.ndarray) -> int:
    cdf = np.cumsum(probs)
    i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(i, probs.shape[0] - 1)


_ARRAY_FIELDS = ("states", "actions", "regret", "cum_regret", "bonuses", "optimism_violations",
                 "suboptimality", "confidence_violations", "betas")


@dataclass(eq=False)
class RegretTrace:
    """Per-episode record of one run.

    Arrays are indexed by episode (0-based row ``k`` is episode ``k+1``).
    ``suboptimality[k, h]`` is ``V*_h(s_h) - Q^{pi_k}_h(s_h, a_h)`` on the
    realized trajectory; ``bonuses`` holds the exploration bonus at the
    visited pair.
    """

    algorithm: str
    seed: int
    K: int
    H: int
    d: int
    delta: float
    c_beta: float
    gap_min: float
    c_theta: float
    states: np.ndarray
    actions: np.ndarray
    regret: np.ndarray
    cum_regret: np.ndarray
    bonuses: np.ndarray
    optimism_violations: np.ndarray
    suboptimality: np.ndarray
    confidence_violations: np.ndarray
    betas: np.ndarray
    decomposition_error: float = 0.0
    inverse_error: float = 0.0
    potential_ratio: float = 0.0
    potential_violations: int = 0
    ridge_ok: bool = True
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, np.ndarray):
                val = val.tolist()
            elif isinstance(val, float) and not np.isfinite(val):
                val = None if np.isnan(val) else ("inf" if val > 0 else "-inf")
            out[f.name] = val
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "RegretTrace":
        kw = dict(doc)
        ints = {"states", "actions", "optimism_violations", "confidence_violations"}
        for name in _ARRAY_FIELDS:
            kw[name] = np.array(kw[name], dtype=np.int64 if name in ints else np.float64)
        if kw["states"].size == 0:
            kw["states"] = kw["states"].reshape(0, kw["H"] + 1)
        for name in ("gap_min", "c_theta"):
            if isinstance(kw[name], str):
                kw[name] = float(kw[name])
            elif kw[name] is None:
                kw[name] = float("nan")
        return cls(**kw)

    def __eq__(self, other):
        if not isinstance(other, RegretTrace):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def make_agent(config: ExperimentConfig, env):
    h = config.hyper
    if config.algorithm == "lsvi-ucb":
        lam = 1.0 if h.lam is None else h.lam
        beta = lsvi_beta(env.d, env.H, config.K * env.H, config.delta, h.c_beta)
        return LsviUcb(env, beta, lam)
    return UcrlVtr(env, delta=config.delta, beta_scale=h.c_beta, lam=h.lam, clip=h.clip)


def run_single(config: ExperimentConfig, seed: int, env=None, sol: ExactSolution = None) -> RegretTrace:
    """Run ``config.K`` episodes with run seed ``seed``."""
    env = config.build_env() if env is None else env
    sol = solve_optimal(env) if sol is None else sol
    diag = config.diagnostics
    agent = make_agent(config, env)
    is_lsvi = isinstance(agent, LsviUcb)
    tab = as_tabular(env)       # exact evaluation works on the materialized kernel
    P = tab.transitions
    init = env.initial_distribution
    H, K = env.H, config.K

    states = np.zeros((K, H + 1), dtype=np.int64)
    actions = np.zeros((K, H), dtype=np.int64)
    regret = np.zeros(K)
    bonuses = np.zeros((K, H))
    opt_viol = np.zeros(K, dtype=np.int64)
    subopt = np.zeros((K, H))
    conf_viol = np.zeros(K, dtype=np.int64)
    betas = np.zeros(K)
    decomposition_error = 0.0
    inverse_error = 0.0
    steps = np.arange(H)
    vtr_samples = [] if (diag.ridge_check and not is_lsvi) else None

    for k in range(K):
        rng = episode_rng(seed, k + 1)
        plan = agent.plan()
        policy = plan.policy()
        betas[k] = plan.beta
        s = _sample(rng, init)
        states[k, 0] = s
        for h in range(H):
            a = int(policy[h, s])
            actions[k, h] = a
            s = _sample(rng, P[h, s, a])
            states[k, h + 1] = s
        pv = evaluate_policy(tab, policy)
        s1 = states[k, 0]
        regret[k] = sol.v[0, s1] - pv.v[0, s1]
        if regret[k] < -DECOMPOSITION_TOL:
            raise RunFailure(f"negative regret {regret[k]:.3e} in episode {k + 1}")
        vis_s, vis_a = states[k, :H], actions[k]
        subopt[k] = sol.v[steps, vis_s] - pv.q[steps, vis_s, vis_a]
        bonuses[k] = plan.bonus[steps, vis_s, vis_a]
        if diag.optimism:
            opt_viol[k] = int(np.sum(plan.q[steps, vis_s, vis_a]
                                     < sol.q[steps, vis_s, vis_a] - OPTIMISM_TOL))
        if diag.decomposition:
            err = abs(regret[k] - expected_gap_sum(tab, policy, s1, sol))
            decomposition_error = max(decomposition_error, err)
            if err > DECOMPOSITION_TOL:
                raise RunFailure(f"regret decomposition off by {err:.3e} in episode {k + 1}")
        if diag.confidence_set and not is_lsvi:
            widths = agent.confidence_widths(plan, env.theta)
            conf_viol[k] = int(np.sum(widths > plan.beta ** 2))
        if vtr_samples is not None:
            vtr_samples.append((plan.phi_v[steps, vis_s, vis_a].copy(),
                                plan.v[steps + 1, states[k, 1:]].copy()))
        if is_lsvi:
            agent.observe(states[k], actions[k])
        else:
            agent.observe(states[k], actions[k], plan)
        if diag.linalg_check_every and (k + 1) % diag.linalg_check_every == 0:
            inverse_error = max(inverse_error, max(g.inverse_error() for g in agent.grams))

    if opt_viol.any():
        log.warning("seed %d: %d optimism violations", seed, int(opt_viol.sum()))
    if conf_viol.any():
        log.warning("seed %d: %d confidence-set violations", seed, int(conf_viol.sum()))

    inverse_error = max(inverse_error, max(g.inverse_error() for g in agent.grams))
    if is_lsvi:
        norm_bound = float(np.linalg.norm(env.features, axis=-1).max())
    else:
        norm_bound = float(H) if agent.clip else float("inf")
    bound_ratio = max(g.potential / g.potential_bound(norm_bound) if g.count else 0.0
                      for g in agent.grams) if np.isfinite(norm_bound) else float("nan")
    ridge_ok = True
    if diag.ridge_check:
        ridge_ok = _ridge_check(agent, is_lsvi, vtr_samples)

    return RegretTrace(
        algorithm=config.algorithm, seed=int(seed), K=K, H=H, d=env.d, delta=config.delta,
        c_beta=config.hyper.c_beta, gap_min=sol.gap_min,
        c_theta=float(getattr(env, "c_theta", float("nan"))),
        states=states, actions=actions, regret=regret, cum_regret=np.cumsum(regret),
        bonuses=bonuses, optimism_violations=opt_viol, suboptimality=subopt,
        confidence_violations=conf_viol, betas=betas,
        decomposition_error=decomposition_error, inverse_error=inverse_error,
        potential_ratio=float(bound_ratio),
        potential_violations=int(np.isfinite(bound_ratio) and bound_ratio > 1.0),
        ridge_ok=bool(ridge_ok),
        extras={"config": json.loads(config.to_json())},
    )


def _ridge_check(agent, is_lsvi: bool, vtr_samples) -> bool:
    ok = True
    if is_lsvi:
        plan = agent.plan()
        st = np.array([s for s, _ in agent.replay])
        ac = np.array([a for _, a in agent.replay])
        for h, gram in enumerate(agent.grams):
            X = agent.env.features[st[:, h], ac[:, h]]
            y = agent.regression_targets(plan, h)
            ok &= ridge_objective_is_minimal(X, y, gram.lam, plan.weights[h])
    else:
        theta = agent.estimates()
        X = np.array([x for x, _ in vtr_samples])
        Y = np.array([y for _, y in vtr_samples])
        for h, gram in enumerate(agent.grams):
            ok &= ridge_objective_is_minimal(X[:, h], Y[:, h], gram.lam, theta[h])
    return bool(ok)


def _run_one(args):
    config, seed = args
    return run_single(config, seed)


def run_experiment(config: ExperimentConfig) -> list:
    """One :class:`RegretTrace` per configured seed, in seed order."""
    config.validate()
    if config.workers > 1 and len(config.seeds) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(_run_one, [(config, s) for s in config.seeds]))
    env = config.build_env()
    sol = solve_optimal(env)
    return [run_single(config, s, env, sol) for s in config.seeds]


def sweep(config: ExperimentConfig, c_betas=None) -> dict:
    """Run every configured seed at every bonus scale; ``{c_beta: [traces]}``."""
    grid = tuple(config.sweep_c_beta if c_betas is None else c_betas)
    return {c: run_experiment(config.with_overrides(c_beta=c)) for c in grid}


def tune_beta_scale(results: dict) -> float:
    """Bonus scale with the lowest mean final cumulative regret (first wins ties)."""
    best, best_val = None, float("inf")
    for c, traces in results.items():
        val = float(np.mean([t.cum_regret[-1] for t in traces]))
        if val < best_val:
            best, best_val = c, val
    return best
