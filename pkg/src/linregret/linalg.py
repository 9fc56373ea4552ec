"""Regularized Gram matrices with a maintained inverse."""

from __future__ import annotations

import math

import numpy as np

DRIFT_TOL = 1e-8

__all__ = ["DRIFT_TOL", "GramState", "elliptical_potential_bound"]


def _as_vector(x, d: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (d,):
        raise ValueError(f"{what} must have shape ({d},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{what} must be finite")
    return x


def elliptical_potential_bound(d: int, lam: float, k: int, norm_bound: float = 1.0) -> float:
    """2 d log((lam + k L^2) / lam) for k vectors of norm at most L."""
    return 2.0 * d * math.log((lam + k * norm_bound ** 2) / lam)


class GramState:
    """``Lambda = lam I + sum_i phi_i phi_i^T`` together with its inverse.

    The inverse is kept current with rank-one (Sherman-Morrison) updates and
    refactorized from scratch whenever ``max|Lambda Lambda^-1 - I|`` exceeds
    ``DRIFT_TOL``. ``potential`` accumulates ``phi^T Lambda^-1 phi`` evaluated
    before each update.
    """

    def __init__(self, d: int, lam: float):
        if d < 1:
            raise ValueError("dimension must be positive")
        if not lam > 0:
            raise ValueError("regularizer must be positive")
        self.d = int(d)
        self.lam = float(lam)
        self.matrix = self.lam * np.eye(self.d)
        self.inverse = np.eye(self.d) / self.lam
        self.count = 0
        self.potential = 0.0
        self.refactorizations = 0

    def copy(self) -> "GramState":
        out = GramState.__new__(GramState)
        out.__dict__.update(self.__dict__)
        out.matrix = self.matrix.copy()
        out.inverse = self.inverse.copy()
        return out

    def inverse_consistency(self) -> float:
        return float(np.abs(self.matrix @ self.inverse - np.eye(self.d)).max())

    def inverse_error(self) -> float:
        """Max entry deviation of the maintained inverse from a dense re-inversion."""
        return float(np.abs(self.inverse - np.linalg.inv(self.matrix)).max())

    def refactorize(self) -> None:
        inv = np.linalg.inv(self.matrix)
        self.inverse = 0.5 * (inv + inv.T)
        self.refactorizations += 1

    def rank1_update(self, phi) -> "GramState":
        phi = _as_vector(phi, self.d, "feature")
        u = self.inverse @ phi
        q = max(float(phi @ u), 0.0)
        self.potential += q
        self.count += 1
        if q == 0.0 and not phi.any():
            return self
        self.matrix += np.outer(phi, phi)
        self.inverse -= np.outer(u, u) / (1.0 + q)
        if self.inverse_consistency() > DRIFT_TOL:
            self.refactorize()
        return self

    def quadratic_form(self, phi) -> float:
        phi = _as_vector(phi, self.d, "feature")
        val = float(phi @ self.inverse @ phi)
        if val < 0.0:
            if val < -1e-12:
                raise FloatingPointError(f"quadratic form {val:.3e} is negative")
            val = 0.0
        return val

    def quadratic_forms(self, phis: np.ndarray) -> np.ndarray:
        """Row-wise ``phi^T Lambda^-1 phi`` for an array whose last axis is d."""
        phis = np.asarray(phis, dtype=np.float64)
        vals = np.einsum("...i,ij,...j->...", phis, self.inverse, phis)
        if vals.size and vals.min() < -1e-12:
            raise FloatingPointError(f"quadratic form {vals.min():.3e} is negative")
        return np.maximum(vals, 0.0)

    def ridge_solve(self, b) -> np.ndarray:
        b = _as_vector(b, self.d, "target vector")
        return self.inverse @ b

    def potential_bound(self, norm_bound: float = 1.0) -> float:
        return elliptical_potential_bound(self.d, self.lam, self.count, norm_bound)
