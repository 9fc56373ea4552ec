"""Post-run diagnostics: peeling counts, regret-shape fits, ridge optimality."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..oracle import GapUndefinedError

__all__ = [
    "GapIntervalCounts",
    "RegretFit",
    "DegenerateTraceError",
    "count_gap_intervals",
    "lsvi_count_bound",
    "vtr_count_bound",
    "fit_regret_models",
    "ridge_objective",
    "ridge_objective_is_minimal",
]


class DegenerateTraceError(ValueError):
    """The fitted window of cumulative regret has zero variance."""


def ridge_objective(X, y, lam: float, w) -> float:
    resid = np.asarray(X) @ w - np.asarray(y)
    return float(lam * (w @ w) + resid @ resid)


def ridge_objective_is_minimal(X, y, lam: float, w, eps: float = 1e-4) -> bool:
    """Perturbing any coordinate of ``w`` by +/-eps must not lower the objective."""
    w = np.asarray(w, dtype=np.float64)
    base = ridge_objective(X, y, lam, w)
    for i in range(w.shape[0]):
        for step in (eps, -eps):
            wp = w.copy()
            wp[i] += step
            if ridge_objective(X, y, lam, wp) < base:
                return False
    return True


def _log_term_bound(scale: float) -> float:
    return scale * math.log(scale) if scale > 1.0 else scale


def lsvi_count_bound(n: int, d: int, H: int, T: int, delta: float, gap_min: float,
                     C: float = 1.0) -> float:
    """``X log X`` with ``X = C d^3 H^4 ln(2dT/delta) / (4^n gap_min^2)``."""
    x = C * d ** 3 * H ** 4 * math.log(2 * d * T / delta) / (4 ** n * gap_min ** 2)
    return _log_term_bound(x)


def vtr_count_bound(n: int, d: int, H: int, T: int, delta: float, gap_min: float,
                    c_theta: float) -> float:
    """``X log X`` with ``X = 512 C^2 d^2 H^4 ln^3(2dT/delta) / (4^n gap_min^2)``."""
    x = 512 * c_theta ** 2 * d ** 2 * H ** 4 * math.log(2 * d * T / delta) ** 3 / (4 ** n * gap_min ** 2)
    return _log_term_bound(x)


@dataclass(frozen=True, eq=False)
class GapIntervalCounts:
    """Dyadic peeling counts.

    ``interval_counts[h, i-1]`` counts episodes whose realized gap at step h
    lies in ``[2^(i-1) g, 2^i g)`` for ``i = 1..N``. ``threshold_counts[h, n]``
    counts episodes with ``V*_h(s_h) - Q^{pi_k}_h(s_h, a_h) >= 2^n g`` for
    ``n = 0..N``; ``first_half``/``second_half`` split those counts over
    episodes ``[1, K/2]`` and ``(K/2, K]``. ``bounds[h, n]`` is the matching
    high-probability bound on the threshold count.
    """

    gap_min: float
    N: int
    interval_counts: np.ndarray
    threshold_counts: np.ndarray
    first_half: np.ndarray
    second_half: np.ndarray
    bounds: np.ndarray

    def active_levels(self, H: int) -> np.ndarray:
        """Levels n with ``2^n gap_min <= H``."""
        return np.array([n for n in range(self.N + 1) if 2 ** n * self.gap_min <= H])

    def saturates(self, H: int) -> bool:
        lv = self.active_levels(H)
        return bool(np.all(self.second_half[:, lv] <= self.first_half[:, lv]))

    def within_bounds(self) -> bool:
        return bool(np.all(self.threshold_counts <= self.bounds))


def count_gap_intervals(trace, sol, C: float = 1.0) -> GapIntervalCounts:
    """Peeling counts for a trace against its exact solution."""
    gmin = sol.gap_min
    if not (np.isfinite(gmin) and gmin > 0):
        raise GapUndefinedError("peeling counts need a finite positive gap_min")
    H, K = trace.H, trace.K
    N = max(1, math.ceil(math.log2(H / gmin)))
    edges = gmin * 2.0 ** np.arange(N + 1)          # 2^0 g .. 2^N g
    steps = np.arange(H)
    gaps = sol.gaps[steps[None, :], trace.states[:, :H], trace.actions]   # (K, H)
    gaps = np.where(gaps > 1e-9, gaps, 0.0)
    interval = np.zeros((H, N), dtype=np.int64)
    for h in range(H):
        g = gaps[:, h]
        g = g[g > 0]
        idx = np.searchsorted(edges, g * (1 + 1e-12), side="right")    # edges[idx-1] <= g < edges[idx]
        idx = np.clip(idx, 1, N)
        interval[h] = np.bincount(idx - 1, minlength=N)[:N]
    thresholds = edges * (1 - 1e-12)
    hits = trace.suboptimality[:, :, None] >= thresholds[None, None, :]   # (K, H, N+1)
    half = K // 2
    first = hits[:half].sum(axis=0)
    second = hits[half:].sum(axis=0)
    T = K * H
    bounds = np.zeros((H, N + 1))
    for n in range(N + 1):
        if trace.algorithm == "ucrl-vtr":
            b = vtr_count_bound(n, trace.d, H, T, trace.delta, gmin, trace.c_theta)
        else:
            b = lsvi_count_bound(n, trace.d, H, T, trace.delta, gmin, C)
        bounds[:, n] = b
    return GapIntervalCounts(gmin, N, interval, first + second, first, second, bounds)


@dataclass(frozen=True)
class RegretFit:
    """Least-squares fits of cumulative regret on the second half of a run."""

    log_coef: tuple
    log_r2: float
    sqrt_coef: tuple
    sqrt_r2: float
    preferred: str
    window: tuple


def _fit(x: np.ndarray, y: np.ndarray):
    # centered simple regression; numerically stable on nearly flat curves
    xc = x - x.mean()
    yc = y - y.mean()
    slope = float(xc @ yc) / float(xc @ xc)
    intercept = float(y.mean() - slope * x.mean())
    resid = yc - slope * xc
    return (intercept, slope), 1.0 - float(resid @ resid) / float(yc @ yc)


def fit_regret_models(trace_or_cum) -> RegretFit:
    """Fit ``a + b ln k`` and ``a + b sqrt k`` on episodes ``[K/2, K]``."""
    cum = np.asarray(getattr(trace_or_cum, "cum_regret", trace_or_cum), dtype=np.float64)
    K = cum.shape[0]
    if K < 100:
        raise ValueError(f"regret fits need K >= 100 episodes, got {K}")
    start = max(1, K // 2)
    k = np.arange(start, K + 1, dtype=np.float64)
    y = cum[start - 1:]
    spread = float(y.max() - y.min())
    if spread <= 1e-12 * max(1.0, float(np.abs(y).max())):
        raise DegenerateTraceError("cumulative regret is constant on the fit window")
    log_coef, log_r2 = _fit(np.log(k), y)
    sqrt_coef, sqrt_r2 = _fit(np.sqrt(k), y)
    preferred = "log" if log_r2 >= sqrt_r2 else "sqrt"
    return RegretFit(log_coef, log_r2, sqrt_coef, sqrt_r2, preferred, (start, K))
