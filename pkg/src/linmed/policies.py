"""Arm-selection policies for stochastic linear bandits.

LinMED and LinMEDNOPT expose their full sampling distribution in closed
form. EXP2 (reward version) does too. OFUL is deterministic, and linear
Thompson sampling only admits Monte-Carlo propensity estimates.

Every policy follows the same protocol::

    policy.reset(dim)
    decision = policy.select(arms, rng)
    ...
    policy.update(arms, decision, reward)

``update`` may be called late (delayed feedback) with the arm set and
decision of the round that produced the reward.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import design as _design
from ._kernels import OK, argmax_counts_kernel, linmed_kernel
from .design import approx_design, design_augmented, design_cap
from .errors import InvalidArgument
from .linalg import ConfidenceParams, GramState, beta

# squared distances at or below this are treated as zero in the 0/0 rule
ZERO_DIST = 1e-15
# exponents beyond this floor f at the smallest normal double
MAX_EXPONENT = 700.0
TINY = np.finfo(float).tiny

LINMED_PRESETS = {
    "LinMED-99": (0.99, 0.005),
    "LinMED-90": (0.90, 0.05),
    "LinMED-50": (0.50, 0.25),
}


@dataclass
class LinMedConfig:
    alpha_emp: float = 0.90
    alpha_opt: float = 0.05
    ver: int = 0
    confidence: ConfidenceParams = field(default_factory=ConfidenceParams)
    lam: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.alpha_emp < 1.0:
            raise InvalidArgument(f"alpha_emp must lie in (0, 1), got {self.alpha_emp}")
        if not 0.0 < self.alpha_opt < 1.0:
            raise InvalidArgument(f"alpha_opt must lie in (0, 1), got {self.alpha_opt}")
        if not self.alpha_emp + self.alpha_opt < 1.0:
            raise InvalidArgument("alpha_emp + alpha_opt must be < 1")
        if self.ver not in (0, 1):
            raise InvalidArgument(f"ver must be 0 or 1, got {self.ver}")
        if not self.lam > 0:
            raise InvalidArgument(f"lam must be positive, got {self.lam}")

    @classmethod
    def preset(cls, name: str, **kwargs) -> "LinMedConfig":
        try:
            alpha_emp, alpha_opt = LINMED_PRESETS[name]
        except KeyError:
            raise InvalidArgument(f"unknown preset {name!r}; valid: {sorted(LINMED_PRESETS)}") from None
        return cls(alpha_emp=alpha_emp, alpha_opt=alpha_opt, **kwargs)


@dataclass
class ActionDistribution:
    """Sampling probabilities over the current arm set and their ingredients.

    Only ``probs`` is always present; the other fields are filled by the
    policies that compute them.
    """

    probs: np.ndarray
    f: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None
    p_prime: Optional[np.ndarray] = None
    b_set: list = field(default_factory=list)
    emp_best: Optional[int] = None
    gaps: Optional[np.ndarray] = None
    denominator: Optional[float] = None


@dataclass
class PolicyDecision:
    arm_index: int
    propensity: Optional[float]
    distribution: Optional[ActionDistribution] = None


def _arms(arms, dim: int) -> np.ndarray:
    A = np.asarray(arms, dtype=float)
    if A.ndim != 2 or A.shape[0] == 0:
        raise InvalidArgument("arm set must be a nonempty (K, d) array")
    if A.shape[1] != dim:
        raise InvalidArgument(f"arm dimension {A.shape[1]} does not match state dimension {dim}")
    return A


def _exp_weights(gaps: np.ndarray, scale: float, dist2: np.ndarray) -> np.ndarray:
    """exp(-gap^2 / (scale * dist2)) with 0/0 := 0 and an underflow floor."""
    with np.errstate(divide="ignore", invalid="ignore"):
        expo = gaps * gaps / (scale * dist2)
    expo[dist2 <= ZERO_DIST] = 0.0
    f = np.exp(-expo)
    f[expo > MAX_EXPONENT] = TINY
    return f


def _empirical_best(gram: GramState, A: np.ndarray):
    means = A @ gram.theta_hat
    best = int(np.argmax(means))
    gaps = np.maximum(means[best] - means, 0.0)
    return best, gaps


def sample_index(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw over arm order."""
    cdf = np.cumsum(probs)
    u = rng.random() * cdf[-1]
    idx = int(np.searchsorted(cdf, u, side="right"))
    return min(idx, len(probs) - 1)


def linmed_distribution(gram: GramState, arms, cfg: LinMedConfig, compiled: bool = True) -> ActionDistribution:
    """LinMED sampling probabilities for the current state.

    ``compiled=True`` runs the whole computation in one compiled kernel and
    falls back to the numpy path when the design step needs it.
    """
    A = _arms(arms, gram.dim)
    K = A.shape[0]
    b = beta(gram, cfg.confidence)
    if compiled:
        status, probs, f, q, p_prime, best, gaps, denominator, lev = linmed_kernel(
            np.ascontiguousarray(A), gram.V_inv, gram.theta_hat, b, cfg.alpha_emp, cfg.alpha_opt, cfg.ver,
            ZERO_DIST, MAX_EXPONENT, TINY, _design.F_FLOOR, _design.SPAN_TOL, design_cap(gram.dim),
            1.0 + _design.LEVERAGE_RTOL, _design.WELL_CONDITIONED,
        )
        if status == OK:
            return ActionDistribution(
                probs=probs,
                f=f,
                q=q,
                p_prime=p_prime,
                b_set=[k for k in range(K) if lev[k] > 1.0],
                emp_best=int(best),
                gaps=gaps,
                denominator=denominator,
            )
    best, gaps = _empirical_best(gram, A)
    f = _exp_weights(gaps, b, _pair_distances(gram, A, best))

    q_opt = design_augmented(A, f, cfg.ver).dense()
    q = cfg.alpha_opt * q_opt + (1.0 - cfg.alpha_opt - cfg.alpha_emp) / K
    q[best] += cfg.alpha_emp
    w = q * f
    denominator = float(w.sum())
    p_prime = w / denominator

    b_set = np.flatnonzero(gram.leverages(A) > 1.0)
    if b_set.size:
        probs = 0.5 * p_prime
        probs[b_set[0]] += 0.5
    else:
        probs = p_prime.copy()
    return ActionDistribution(
        probs=probs,
        f=f,
        q=q,
        p_prime=p_prime,
        b_set=[int(i) for i in b_set],
        emp_best=best,
        gaps=gaps,
        denominator=denominator,
    )


def _pair_distances(gram: GramState, A: np.ndarray, best: int) -> np.ndarray:
    D = A[best] - A
    return np.maximum(((D @ gram.V_inv) * D).sum(axis=1), 0.0)


NOPT_DENOMINATORS = ("pair", "arm")


def linmednopt_distribution(gram: GramState, arms, cfg: LinMedConfig, denominator: str = "pair") -> ActionDistribution:
    """LinMED's weights f normalized directly, with no design mixing and no B_t step.

    ``denominator="pair"`` scales the exponent by ``||a_hat - a||^2_{V^-1}``
    exactly as LinMED does; ``"arm"`` uses the per-arm leverage
    ``||a||^2_{V^-1}`` of the plain multi-armed analogue.
    """
    if denominator not in NOPT_DENOMINATORS:
        raise InvalidArgument(f"denominator must be one of {NOPT_DENOMINATORS}, got {denominator!r}")
    A = _arms(arms, gram.dim)
    best, gaps = _empirical_best(gram, A)
    b = beta(gram, cfg.confidence)
    dist2 = _pair_distances(gram, A, best) if denominator == "pair" else gram.leverages(A)
    f = _exp_weights(gaps, b, dist2)
    f[best] = 1.0
    return ActionDistribution(probs=f / f.sum(), f=f, emp_best=best, gaps=gaps)


def exp2_tuning(g: float, d: int, K: int, n: int):
    """Default (gamma, eta) for EXP2 given the design value ``g``."""
    gamma = math.sqrt(g * g * math.log(K) / ((2 * g + d) * n))
    # K = 1 gives gamma = 0 and a large n/K ratio can push it to 1; keep it inside (0, 1)
    gamma = min(max(gamma, 1e-12), 1.0 - 1e-12)
    return gamma, gamma / g


def exp2_distribution(theta_sum: np.ndarray, arms, pi: np.ndarray, gamma: float, eta: float) -> ActionDistribution:
    """gamma * pi + (1 - gamma) * softmax(eta * <a, theta_sum>)."""
    if not 0.0 < gamma < 1.0:
        raise InvalidArgument(f"gamma must lie in (0, 1), got {gamma}")
    if not eta > 0:
        raise InvalidArgument(f"eta must be positive, got {eta}")
    A = np.asarray(arms, dtype=float)
    logits = eta * (A @ theta_sum)
    logits -= logits.max()
    soft = np.exp(logits)
    soft /= soft.sum()
    probs = gamma * np.asarray(pi, dtype=float) + (1.0 - gamma) * soft
    return ActionDistribution(probs=probs)


def oful_select(gram: GramState, arms, confidence: ConfidenceParams) -> PolicyDecision:
    A = _arms(arms, gram.dim)
    index = A @ gram.theta_hat + math.sqrt(beta(gram, confidence)) * np.sqrt(gram.leverages(A))
    return PolicyDecision(int(np.argmax(index)), 1.0)


def _ts_factor(gram: GramState, variant: str, confidence: ConfidenceParams, scale: Optional[float]):
    if scale is None:
        if variant == "freq":
            scale = beta(gram, confidence)
        elif variant == "bayes":
            scale = confidence.sigma ** 2
        else:
            raise InvalidArgument(f"variant must be 'freq' or 'bayes', got {variant!r}")
    if scale == 0.0:
        return np.zeros((gram.dim, gram.dim))
    return np.linalg.cholesky(scale * gram.V_inv)


def lints_sample(gram: GramState, arms, variant: str, confidence: ConfidenceParams,
                 rng: np.random.Generator, scale: Optional[float] = None,
                 factor: Optional[np.ndarray] = None) -> PolicyDecision:
    """Draw theta ~ N(theta_hat, c V^{-1}) and play its argmax.

    ``c`` is beta for the frequentist variant and sigma^2 for the Bayesian
    one; ``scale`` overrides it and ``factor`` supplies its Cholesky factor.
    """
    A = _arms(arms, gram.dim)
    L = _ts_factor(gram, variant, confidence, scale) if factor is None else factor
    theta = gram.theta_hat + L @ rng.standard_normal(gram.dim)
    return PolicyDecision(int(np.argmax(A @ theta)), None)


def lints_propensity_mc(gram: GramState, arms, variant: str, confidence: ConfidenceParams, M: int,
                        rng: np.random.Generator, scale: Optional[float] = None,
                        factor: Optional[np.ndarray] = None) -> np.ndarray:
    """Empirical argmax frequencies over ``M`` posterior draws (may contain zeros).

    ``factor`` is a precomputed Cholesky factor of the sampling covariance.
    """
    if M < 1:
        raise InvalidArgument("M must be >= 1")
    A = _arms(arms, gram.dim)
    L = _ts_factor(gram, variant, confidence, scale) if factor is None else factor
    Z = rng.standard_normal((M, gram.dim))
    return argmax_counts_kernel(Z, gram.theta_hat, np.ascontiguousarray(L), np.ascontiguousarray(A)) / M


# --- stateful policies -----------------------------------------------------


class Policy:
    name = "policy"
    closed_form = False

    def reset(self, dim: int) -> None:
        raise NotImplementedError

    def select(self, arms, rng: np.random.Generator) -> PolicyDecision:
        raise NotImplementedError

    def update(self, arms, decision: PolicyDecision, reward: float) -> None:
        self.gram.update(np.asarray(arms, dtype=float)[decision.arm_index], reward)


class LinMED(Policy):
    closed_form = True

    def __init__(self, cfg: Optional[LinMedConfig] = None, name: str = "LinMED"):
        self.cfg = cfg or LinMedConfig()
        self.name = name
        self.gram = None

    def reset(self, dim):
        self.gram = GramState(dim, self.cfg.lam)

    def distribution(self, arms) -> ActionDistribution:
        return linmed_distribution(self.gram, arms, self.cfg)

    def select(self, arms, rng):
        dist = self.distribution(arms)
        i = sample_index(dist.probs, rng)
        return PolicyDecision(i, float(dist.probs[i]), dist)


def linmed_step(policy: LinMED, arms, rng: np.random.Generator) -> PolicyDecision:
    return policy.select(arms, rng)


class LinMEDNOPT(LinMED):
    def __init__(self, cfg: Optional[LinMedConfig] = None, name: str = "LinMEDNOPT", denominator: str = "pair"):
        super().__init__(cfg, name)
        if denominator not in NOPT_DENOMINATORS:
            raise InvalidArgument(f"denominator must be one of {NOPT_DENOMINATORS}, got {denominator!r}")
        self.denominator = denominator

    def distribution(self, arms):
        return linmednopt_distribution(self.gram, arms, self.cfg, self.denominator)


class OFUL(Policy):
    closed_form = True  # deterministic: the played arm has probability 1

    def __init__(self, confidence: Optional[ConfidenceParams] = None, lam: float = 1.0, name: str = "OFUL"):
        self.confidence = confidence or ConfidenceParams()
        self.lam = lam
        self.name = name
        self.gram = None

    def reset(self, dim):
        self.gram = GramState(dim, self.lam)

    def select(self, arms, rng):
        return oful_select(self.gram, arms, self.confidence)


class LinTS(Policy):
    def __init__(self, variant: str = "freq", confidence: Optional[ConfidenceParams] = None,
                 lam: float = 1.0, name: Optional[str] = None):
        if variant not in ("freq", "bayes"):
            raise InvalidArgument(f"variant must be 'freq' or 'bayes', got {variant!r}")
        self.variant = variant
        self.confidence = confidence or ConfidenceParams()
        self.lam = lam
        self.name = name or f"LinTS-{variant.capitalize()}"
        self.gram = None

    def reset(self, dim):
        self.gram = GramState(dim, self.lam)
        self._cached = None

    def _factor(self):
        # one factorization per state; select and propensities see the same state
        if self._cached is None or self._cached[0] != self.gram.t:
            self._cached = (self.gram.t, _ts_factor(self.gram, self.variant, self.confidence, None))
        return self._cached[1]

    def select(self, arms, rng):
        return lints_sample(self.gram, arms, self.variant, self.confidence, rng, factor=self._factor())

    def propensities(self, arms, M, rng):
        return lints_propensity_mc(self.gram, arms, self.variant, self.confidence, M, rng, factor=self._factor())


class EXP2(Policy):
    """EXP2 with importance-weighted least-squares reward estimates.

    ``gamma``/``eta`` default to the minimax tuning for ``horizon`` rounds,
    computed from the exploration design of the arm set.
    """

    closed_form = True

    def __init__(self, horizon: Optional[int] = None, gamma: Optional[float] = None,
                 eta: Optional[float] = None, name: str = "EXP2"):
        if gamma is None and horizon is None:
            raise InvalidArgument("EXP2 needs either a horizon or explicit gamma/eta")
        self.horizon = horizon
        self.gamma = gamma
        self.eta = eta
        self.name = name
        self._cache_key = None

    def reset(self, dim):
        self.dim = dim
        self.theta_sum = np.zeros(dim)
        self._cache_key = None

    def _exploration(self, A: np.ndarray):
        key = (A.shape, A.tobytes())
        if key != self._cache_key:
            design, report = approx_design(A)
            gamma, eta = self.gamma, self.eta
            if gamma is None or eta is None:
                tuned = exp2_tuning(report.max_leverage, self.dim, A.shape[0], self.horizon)
                gamma = tuned[0] if gamma is None else gamma
                eta = tuned[1] if eta is None else eta
            self._pi, self._g = design.dense(), report.max_leverage
            self._params = (gamma, eta)
            self._cache_key = key
        return self._pi, self._params

    def distribution(self, arms) -> ActionDistribution:
        A = _arms(arms, self.dim)
        pi, (gamma, eta) = self._exploration(A)
        return exp2_distribution(self.theta_sum, A, pi, gamma, eta)

    def select(self, arms, rng):
        dist = self.distribution(arms)
        i = sample_index(dist.probs, rng)
        return PolicyDecision(i, float(dist.probs[i]), dist)

    def update(self, arms, decision, reward):
        A = np.asarray(arms, dtype=float)
        P = decision.distribution.probs
        Q = (A * P[:, None]).T @ A
        self.theta_sum += np.linalg.pinv(Q, hermitian=True) @ (A[decision.arm_index] * reward)
