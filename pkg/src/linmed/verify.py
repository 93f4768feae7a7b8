"""Built-in invariant suites.

Each suite returns a :class:`SuiteResult`. The ``quick`` sizes keep
``linmed verify`` to a few seconds; the test-suite runs them at full size.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .design import approx_design, design_cap
from .linalg import ConfidenceParams, GramState
from .policies import LINMED_PRESETS, LinMedConfig, linmed_distribution

KERNEL_TOL = 1e-8
RECURRENCE_TOL = 1e-10
PROB_SUM_TOL = 1e-9
# relative slack on g(pi) <= tau for floating-point rounding of the leverages
CERTIFICATE_RTOL = 1e-9


@dataclass
class SuiteResult:
    name: str
    passed: bool
    checked: int
    seconds: float
    details: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = ", ".join(f"{k}={v:.3g}" if isinstance(v, float) else f"{k}={v}" for k, v in self.details.items())
        return f"{status} {self.name}: {self.checked} checks in {self.seconds:.1f}s ({extra})"


def _unit_ball(rng, K, d):
    X = rng.standard_normal((K, d))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    return X * rng.random((K, 1)) ** (1.0 / d)


def linalg_suite(seeds: int = 50, steps: int = 1000, max_dim: int = 16, lam: float = 1.0) -> SuiteResult:
    """Incremental Gram state against dense recomputation, step by step."""
    start = time.perf_counter()
    worst = {"V_inv": 0.0, "theta": 0.0, "log_det": 0.0, "recurrence": 0.0}
    failures = []
    checked = 0
    for seed in range(seeds):
        rng = np.random.default_rng([seed, 17])
        d = int(rng.integers(1, max_dim + 1))
        state = GramState(d, lam)
        V = lam * np.eye(d)
        b = np.zeros(d)
        for step in range(steps):
            a = _unit_ball(rng, 1, d)[0]
            y = float(rng.standard_normal())
            before = state.leverage(a)
            state.update(a, y)
            after = state.leverage(a)
            V += np.outer(a, a)
            b += a * y
            V_inv = np.linalg.inv(V)
            errs = {
                "V_inv": float(np.max(np.abs(state.V_inv - V_inv))),
                "theta": float(np.max(np.abs(state.theta_hat - V_inv @ b))),
                "log_det": abs(state.log_det_ratio - (np.linalg.slogdet(V)[1] - d * math.log(lam))),
                "recurrence": abs(after - (1.0 - 1.0 / (1.0 + before))),
            }
            for key, err in errs.items():
                worst[key] = max(worst[key], err)
                tol = RECURRENCE_TOL if key == "recurrence" else KERNEL_TOL
                if not err <= tol and len(failures) < 10:
                    failures.append(f"seed {seed} step {step}: {key} error {err:.3g}")
            checked += 1
    return SuiteResult("linalg", not failures, checked, time.perf_counter() - start, worst, failures)


def design_suite(sets: int = 200, dims=range(2, 11), max_k: int = 200, k_values=None, seed: int = 0) -> SuiteResult:
    """Certificate g(pi) <= tau and the size cap on random arm sets, plus scaled orthogonal bases.

    ``k_values`` defaults to every K in ``d..max_k``.
    """
    start = time.perf_counter()
    failures = []
    checked = 0
    worst_ratio = 0.0
    max_tau = {}
    for d in dims:
        cap = design_cap(d)
        ks = range(d, max_k + 1) if k_values is None else [k for k in k_values if k >= d]
        for K in ks:
            rng = np.random.default_rng([seed, d, K])
            batch = _unit_ball(rng, sets * K, d).reshape(sets, K, d)
            for A in batch:
                design, report = approx_design(A)
                checked += 1
                max_tau[d] = max(max_tau.get(d, 0), report.tau)
                worst_ratio = max(worst_ratio, report.max_leverage / report.tau)
                if report.max_leverage > report.tau * (1.0 + CERTIFICATE_RTOL) or report.tau > cap:
                    if len(failures) < 10:
                        failures.append(f"d={d} K={K}: g={report.max_leverage!r} tau={report.tau} cap={cap}")
        # scaled orthogonal basis: uniform weights and g = d
        rng = np.random.default_rng([seed, d, 0])
        Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        A = Q.T * rng.uniform(0.05, 1.0, size=(d, 1))
        design, report = approx_design(A)
        checked += 1
        uniform = np.allclose(design.dense(), 1.0 / d, rtol=0, atol=1e-12)
        if not uniform or abs(report.max_leverage - d) > d * CERTIFICATE_RTOL:
            failures.append(f"orthogonal basis d={d}: probs={design.dense()} g={report.max_leverage!r}")
    details = {"worst_g_over_tau": worst_ratio}
    details.update({f"max_tau_d{d}": t for d, t in sorted(max_tau.items())})
    return SuiteResult("design", not failures, checked, time.perf_counter() - start, details, failures)


def fuzz_state(rng: np.random.Generator):
    """A random Gram state and arm set, including degenerate corners."""
    d = int(rng.integers(1, 9))
    K = int(rng.integers(1, 33))
    arms = _unit_ball(rng, K, d)
    kind = rng.integers(0, 6)
    if kind == 1 and K > 1:
        arms[rng.integers(0, K, size=K // 2)] = arms[0]  # duplicates
    elif kind == 2:
        arms[rng.integers(0, K)] = 0.0
    elif kind == 3:
        arms = arms[:, :1] * np.eye(d)[:1] if d > 1 else arms  # rank one
        arms = np.ascontiguousarray(arms)
    state = GramState(d, float(10.0 ** rng.uniform(-2, 1)))
    m = int(rng.integers(0, 4 * d + 2)) if kind != 4 else int(rng.integers(100, 2000))
    if m:
        X = _unit_ball(rng, m, d)
        y = X @ rng.standard_normal(d) + rng.standard_normal(m) * 10.0 ** rng.uniform(-3, 1)
        state.V = state.V + X.T @ X
        state.V_inv = np.linalg.inv(state.V)
        state.b = X.T @ y
        state.theta_hat = state.V_inv @ state.b
        state.log_det_ratio = float(np.linalg.slogdet(state.V)[1] - d * math.log(state.lam))
        state.t = m
    sigma = float(10.0 ** rng.uniform(-4, 1))
    return state, arms, ConfidenceParams(sigma=sigma)


def distribution_suite(states: int = 100_000, seed: int = 0) -> SuiteResult:
    """LinMED sampling invariants over fuzzed states, cycling through presets and versions."""
    start = time.perf_counter()
    presets = [(name, ver) for name in LINMED_PRESETS for ver in (0, 1)]
    rng = np.random.default_rng([seed, 3])
    failures = []
    worst_sum = 0.0
    min_p = math.inf
    for i in range(states):
        state, arms, conf = fuzz_state(rng)
        name, ver = presets[i % len(presets)]
        cfg = LinMedConfig.preset(name, ver=ver, confidence=conf, lam=state.lam)
        dist = linmed_distribution(state, arms, cfg)
        best = dist.emp_best
        err = abs(float(dist.probs.sum()) - 1.0)
        worst_sum = max(worst_sum, err)
        min_p = min(min_p, float(dist.probs.min()))
        problems = []
        if not err <= PROB_SUM_TOL:
            problems.append(f"sum(p) off by {err:.3g}")
        if dist.f[best] != 1.0:
            problems.append(f"f(a_hat) = {dist.f[best]!r}")
        if not cfg.alpha_emp <= dist.denominator <= 1.0 + PROB_SUM_TOL:
            problems.append(f"denominator {dist.denominator!r}")
        if not dist.p_prime[best] >= cfg.alpha_emp:
            problems.append(f"p'(a_hat) = {dist.p_prime[best]!r}")
        if not dist.probs.min() > 0.0:
            problems.append("zero probability")
        if problems and len(failures) < 10:
            failures.append(f"state {i} ({name}, ver {ver}): " + "; ".join(problems))
    details = {"worst_sum_error": worst_sum, "min_prob": min_p}
    return SuiteResult("distribution", not failures, states, time.perf_counter() - start, details, failures)


def run_all(quick: bool = True) -> list:
    if quick:
        return [
            linalg_suite(seeds=5, steps=300),
            design_suite(sets=3, k_values=[2, 5, 10, 50, 200]),
            distribution_suite(states=2000),
        ]
    return [linalg_suite(), design_suite(), distribution_suite()]
