"""Online ridge-regression state with rank-one updates.

The state tracks ``V = lam*I + sum a a^T``, its inverse (Sherman-Morrison),
the response vector ``b = sum a*y``, the ridge estimate ``V^{-1} b`` and
``log det V - log det(lam*I)`` (matrix determinant lemma). Every
``refactor_every`` updates the inverse and log-determinant are recomputed
from ``V`` to bound round-off drift.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidArgument

DEFAULT_REFACTOR_EVERY = 512


def default_delta(t: int) -> float:
    return 1.0 / (t + 1)


@dataclass
class ConfidenceParams:
    """Guesses used by the confidence radius.

    ``sigma`` is the sub-Gaussian scale guess (not its square) and ``S`` the
    guess for the norm of the true parameter.
    """

    sigma: float = 1.0
    S: float = 1.0
    delta_schedule: Callable[[int], float] = field(default=default_delta)

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidArgument(f"sigma must be positive, got {self.sigma}")
        if not self.S > 0:
            raise InvalidArgument(f"S must be positive, got {self.S}")


class GramState:
    """Regularized Gram matrix, its inverse and the ridge estimate.

    Single-writer: ``update`` mutates in place. Use ``copy`` to branch.
    """

    def __init__(self, dim: int, lam: float = 1.0, refactor_every: int = DEFAULT_REFACTOR_EVERY):
        if int(dim) != dim or dim < 1:
            raise InvalidArgument(f"dim must be a positive integer, got {dim}")
        if not lam > 0:
            raise InvalidArgument(f"lambda must be positive, got {lam}")
        if refactor_every < 1:
            raise InvalidArgument("refactor_every must be >= 1")
        self.dim = int(dim)
        self.lam = float(lam)
        self.refactor_every = int(refactor_every)
        self.V = self.lam * np.eye(self.dim)
        self.V_inv = np.eye(self.dim) / self.lam
        self.b = np.zeros(self.dim)
        self.theta_hat = np.zeros(self.dim)
        self.log_det_ratio = 0.0
        self.t = 0
        self._since_refactor = 0

    def __repr__(self):
        return f"GramState(dim={self.dim}, lam={self.lam}, t={self.t}, log_det_ratio={self.log_det_ratio:.6g})"

    def copy(self) -> "GramState":
        new = GramState.__new__(GramState)
        new.__dict__.update(self.__dict__)
        for name in ("V", "V_inv", "b", "theta_hat"):
            setattr(new, name, getattr(self, name).copy())
        return new

    def _check(self, arm) -> np.ndarray:
        a = np.asarray(arm, dtype=float)
        if a.shape != (self.dim,):
            raise InvalidArgument(f"expected a vector of length {self.dim}, got shape {a.shape}")
        return a

    def update(self, arm, reward: float) -> "GramState":
        a = self._check(arm)
        u = self.V_inv @ a
        lev = max(float(a @ u), 0.0)
        self.V += np.outer(a, a)
        self.V_inv -= np.outer(u, u) / (1.0 + lev)
        self.b += a * reward
        self.log_det_ratio += math.log1p(lev)
        self.t += 1
        self._since_refactor += 1
        if self._since_refactor >= self.refactor_every:
            self.refactorize()
        self.theta_hat = self.V_inv @ self.b
        return self

    def refactorize(self) -> None:
        chol = np.linalg.cholesky(self.V)
        inv_chol = np.linalg.solve(chol, np.eye(self.dim))
        V_inv = inv_chol.T @ inv_chol
        self.V_inv = 0.5 * (V_inv + V_inv.T)
        fresh = 2.0 * float(np.sum(np.log(np.diag(chol)))) - self.dim * math.log(self.lam)
        # keep the tracked value monotone across a refactorization
        self.log_det_ratio = max(self.log_det_ratio, fresh)
        self._since_refactor = 0

    def leverage(self, arm) -> float:
        a = self._check(arm)
        return max(float(a @ self.V_inv @ a), 0.0)

    def leverages(self, arms) -> np.ndarray:
        """Row-wise ``a^T V^{-1} a`` for a (K, d) array."""
        A = np.asarray(arms, dtype=float)
        return np.maximum(((A @ self.V_inv) * A).sum(axis=1), 0.0)

    def mahalanobis_gap(self, a, b) -> float:
        a = self._check(a)
        b = self._check(b)
        if np.array_equal(a, b):
            return 0.0
        diff = a - b
        return max(float(diff @ self.V_inv @ diff), 0.0)


def gram_init(dim: int, lam: float = 1.0, refactor_every: int = DEFAULT_REFACTOR_EVERY) -> GramState:
    return GramState(dim, lam, refactor_every)


def gram_update(state: GramState, arm, reward: float) -> GramState:
    return state.update(arm, reward)


def leverage(state: GramState, arm) -> float:
    return state.leverage(arm)


def mahalanobis_gap(state: GramState, a, b) -> float:
    return state.mahalanobis_gap(a, b)


def beta(state: GramState, params: ConfidenceParams) -> float:
    """Squared confidence radius at the state's current round count."""
    delta = params.delta_schedule(state.t)
    if not 0.0 < delta <= 1.0:
        raise InvalidArgument(f"delta_t must lie in (0, 1], got {delta} at t={state.t}")
    inner = max(state.log_det_ratio, 0.0) + 2.0 * math.log(1.0 / delta)
    return (params.sigma * math.sqrt(inner) + math.sqrt(state.lam) * params.S) ** 2
