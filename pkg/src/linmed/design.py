"""Approximate G-optimal design over a finite arm set.

Two stages: a barycentric-spanner seed computed with a Gram-Schmidt driven
argmax/argmin sweep, then greedy rounding that keeps adding the arm with the
largest leverage under the running count matrix until every leverage is at
most one. The design is the normalized count vector.

Arm sets that span only a subspace are handled throughout: leverage is taken
with a pseudo-inverse on the range of the count matrix, and an arm with a
component outside that range counts as infinitely uncertain so the greedy
step picks it up.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import OK, design_kernel, spanner_kernel
from .errors import DesignError, InvalidArgument

# b_i / v_i smaller than this (relative to the largest arm) are treated as zero
SPAN_TOL = 1e-10
# eigenvalues of the count matrix below this fraction of the largest are null
NULL_TOL = 1e-13
# greedy stops once every leverage is <= 1 + LEVERAGE_RTOL
LEVERAGE_RTOL = 1e-9
# smallest/largest eigenvalue ratio above which Vbar is inverted directly
WELL_CONDITIONED = 1e-8
# rescaled arms with f below this are left out of the design input
F_FLOOR = 1e-12


def design_cap(d: int) -> int:
    """Termination cap on the number of greedy rounds."""
    return math.ceil(16 * d * (1 + math.log(d)))


@dataclass
class Design:
    """Sparse distribution over arm indices of the input set."""

    indices: np.ndarray
    probs: np.ndarray
    n_arms: int

    @property
    def weights(self) -> dict:
        return {int(i): float(p) for i, p in zip(self.indices, self.probs)}

    @property
    def support_size(self) -> int:
        return int(np.count_nonzero(self.probs > 0))

    def dense(self) -> np.ndarray:
        out = np.zeros(self.n_arms)
        out[self.indices] = self.probs
        return out


@dataclass
class DesignReport:
    max_leverage: float
    tau: int
    effective_rank: int
    counts: np.ndarray


def _as_arms(arms) -> np.ndarray:
    A = np.asarray(arms, dtype=float)
    if A.ndim != 2 or A.shape[0] == 0:
        raise InvalidArgument("arm set must be a nonempty (K, d) array")
    return A


def bh_spanner(arms) -> list:
    """Indices of a small spanning subset of ``arms``.

    Same contract as :func:`bh_spanner_reference`, computed by a compiled loop.
    """
    A = _as_arms(arms)
    K, d = A.shape
    if K <= 2 * d:
        return list(range(K))
    scale = math.sqrt(float((A * A).sum(axis=1).max()))
    tol = SPAN_TOL * max(scale, np.finfo(float).tiny)
    return [int(i) for i in spanner_kernel(np.ascontiguousarray(A), SPAN_TOL, tol)]


def bh_spanner_reference(arms) -> list:
    """Indices of a small spanning subset of ``arms`` (plain numpy).

    Returns every index when ``K <= 2d``. Otherwise sweeps the coordinate
    directions, orthogonalized against the span of previously found
    differences, adding the argmax and argmin of each projection. A
    direction whose projections are all equal adds nothing (except on the
    very first pick, so the result is never empty).
    """
    A = _as_arms(arms)
    K, d = A.shape
    if K <= 2 * d:
        return list(range(K))
    scale = math.sqrt(float(np.max(np.einsum("ij,ij->i", A, A))))
    tol = SPAN_TOL * max(scale, np.finfo(float).tiny)
    chosen: list = []
    U = np.empty((d, d))  # orthonormal rows spanning the differences found so far
    m = 0
    for i in range(d):
        b = -U[:m].T @ U[:m, i]
        b[i] += 1.0
        if math.sqrt(float(b @ b)) <= SPAN_TOL:
            continue
        scores = A @ b
        p = int(np.argmax(scores))
        q = int(np.argmin(scores))
        if scores[p] - scores[q] <= tol and chosen:
            continue
        if p not in chosen:
            chosen.append(p)
        if q not in chosen:
            chosen.append(q)
        v = A[p] - A[q]
        v -= U[:m].T @ (U[:m] @ v)
        nv = math.sqrt(float(v @ v))
        if nv > tol:
            U[m] = v / nv
            m += 1
        if m == d:
            break
    return chosen


def _leverages(Vbar: np.ndarray, A: np.ndarray, sq_norms: np.ndarray, scale_sq: float):
    """Leverage of each row under the pseudo-inverse of ``Vbar``.

    Returns (leverages, rank). Rows with mass outside the range get ``inf``.
    """
    w, Q = np.linalg.eigh(Vbar)
    wmax = w[-1]
    if wmax <= 0:
        lev = np.where(sq_norms > NULL_TOL * scale_sq, np.inf, 0.0)
        return lev, 0
    keep = w > NULL_TOL * wmax
    Z = A @ Q
    Z2 = Z * Z
    lev = Z2[:, keep] @ (1.0 / w[keep])
    resid = Z2[:, ~keep].sum(axis=1)
    lev = np.where(resid > NULL_TOL * scale_sq, np.inf, lev)
    return lev, int(np.count_nonzero(keep))


def _inverse_or_pinv_leverages(Vbar, A, sq_norms, scale_sq):
    """(inverse or None, leverages, rank); the inverse is returned only when Vbar is well conditioned."""
    w, Q = np.linalg.eigh(Vbar)
    if w[0] > WELL_CONDITIONED * w[-1]:
        M = (Q / w) @ Q.T
        lev = np.maximum(((A @ M) * A).sum(axis=1), 0.0)
        return M, lev, Vbar.shape[0]
    lev, rank = _leverages(Vbar, A, sq_norms, scale_sq)
    return None, lev, rank


def approx_design(arms, cap: int | None = None, compiled: bool = True):
    """Greedy approximate G-optimal design seeded by ``bh_spanner``.

    Returns ``(Design, DesignReport)``. ``report.max_leverage`` is the
    largest leverage of any arm under the design's own moment matrix, which
    the stopping rule bounds by ``report.tau``. ``compiled=False`` runs the
    greedy loop in plain numpy only.
    """
    A = _as_arms(arms)
    K, d = A.shape
    sq_norms = (A * A).sum(axis=1)
    scale_sq = float(sq_norms.max())
    if scale_sq == 0.0:
        raise InvalidArgument("arm set has no nonzero arm")
    if cap is None:
        cap = design_cap(d)

    stop = 1.0 + LEVERAGE_RTOL
    if compiled:
        status, counts, tau, lev, Vbar = design_kernel(
            np.ascontiguousarray(A), SPAN_TOL, cap, stop, WELL_CONDITIONED
        )
        if status == OK:
            return _finish(counts, tau, lev, d, cap)
    else:
        counts = np.zeros(K, dtype=np.int64)
        seeds = bh_spanner_reference(A)
        counts[seeds] += 1
        S = A[seeds]
        Vbar = S.T @ S
        tau = len(seeds)

    # numpy loop: finishes rank-deficient cases and certifies the result
    M, lev, rank = _inverse_or_pinv_leverages(Vbar, A, sq_norms, scale_sq)
    fresh = True
    while True:
        k = int(np.argmax(lev))
        if lev[k] <= stop:
            if fresh:
                break
            # rank-one updates drift; confirm on a fresh inverse before stopping
            M, lev, rank = _inverse_or_pinv_leverages(Vbar, A, sq_norms, scale_sq)
            fresh = True
            continue
        if tau >= cap:
            report = DesignReport(float(tau * lev[k]), tau, rank, counts.copy())
            raise DesignError(
                f"design did not terminate within cap {cap} (d={d}, K={K}, max leverage {lev[k]:.6g})",
                report,
            )
        a = A[k]
        counts[k] += 1
        Vbar += np.outer(a, a)
        tau += 1
        if M is not None:
            u = M @ a
            denom = 1.0 + float(a @ u)
            M -= np.outer(u, u) / denom
            z = A @ u
            lev = lev - z * z / denom
            fresh = False
        else:
            M, lev, rank = _inverse_or_pinv_leverages(Vbar, A, sq_norms, scale_sq)

    return _finish(counts, tau, lev, max(rank, 1), cap)


def _finish(counts, tau, lev, rank, cap):
    if tau > cap:
        # the spanner seed alone can exceed a caller-supplied cap
        report = DesignReport(float(tau * lev.max()), tau, rank, counts.copy())
        raise DesignError(f"design size {tau} exceeds cap {cap}", report)
    support = np.flatnonzero(counts)
    design = Design(indices=support, probs=counts[support] / tau, n_arms=counts.shape[0])
    report = DesignReport(max_leverage=float(tau * lev.max()), tau=tau, effective_rank=rank, counts=counts)
    return design, report


def design_augmented(arms, f, ver: int = 0) -> Design:
    """Design over an arm set reshaped by per-arm weights ``f`` in (0, 1].

    ``ver=0`` rescales each arm by ``sqrt(f)`` (arms with ``f`` below
    ``F_FLOOR`` are left out). ``ver=1`` keeps only arms with ``f >= 1/e``.
    Indices of the returned design refer to the original arm set.
    """
    A = _as_arms(arms)
    f = np.asarray(f, dtype=float)
    if f.shape != (A.shape[0],):
        raise InvalidArgument("f must have one entry per arm")
    if not (f.min() > 0 and f.max() <= 1):
        raise InvalidArgument("f values must lie in (0, 1]")
    if ver == 0:
        keep = np.flatnonzero(f >= F_FLOOR)
        B = np.sqrt(f[keep])[:, None] * A[keep]
    elif ver == 1:
        keep = np.flatnonzero(f >= math.exp(-1.0))
        if keep.size == 0:
            raise InvalidArgument("no arm survives the f >= 1/e filter")
        B = A[keep]
    else:
        raise InvalidArgument(f"ver must be 0 or 1, got {ver}")
    if keep.size == 0 or not np.any(B):
        # nothing informative to design over; spread evenly over the survivors
        keep = keep if keep.size else np.arange(A.shape[0])
        return Design(indices=keep, probs=np.full(keep.size, 1.0 / keep.size), n_arms=A.shape[0])
    inner, _ = approx_design(B)
    return Design(indices=keep[inner.indices], probs=inner.probs, n_arms=A.shape[0])
