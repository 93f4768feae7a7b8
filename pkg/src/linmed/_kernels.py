"""Compiled inner loops for the design module.

These mirror the numpy paths in ``design`` step for step. The numpy code
takes over whenever the design moment matrix is singular or ill conditioned.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

OK = 0
CAP_REACHED = 1
SINGULAR = 2


@njit(cache=True)
def spanner_kernel(A, span_tol, tol):
    K, d = A.shape
    chosen = np.empty(2 * d, dtype=np.int64)
    n_chosen = 0
    U = np.zeros((d, d))
    m = 0
    b = np.empty(d)
    v = np.empty(d)
    for i in range(d):
        for j in range(d):
            b[j] = 0.0
        b[i] = 1.0
        for r in range(m):
            c = U[r, i]
            for j in range(d):
                b[j] -= c * U[r, j]
        nb = 0.0
        for j in range(d):
            nb += b[j] * b[j]
        if math.sqrt(nb) <= span_tol:
            continue
        p = 0
        q = 0
        smax = -np.inf
        smin = np.inf
        for k in range(K):
            s = 0.0
            for j in range(d):
                s += A[k, j] * b[j]
            if s > smax:
                smax = s
                p = k
            if s < smin:
                smin = s
                q = k
        if smax - smin <= tol and n_chosen > 0:
            continue
        for idx in (p, q):
            seen = False
            for r in range(n_chosen):
                if chosen[r] == idx:
                    seen = True
            if not seen:
                chosen[n_chosen] = idx
                n_chosen += 1
        for j in range(d):
            v[j] = A[p, j] - A[q, j]
        for r in range(m):
            c = 0.0
            for j in range(d):
                c += U[r, j] * v[j]
            for j in range(d):
                v[j] -= c * U[r, j]
        nv = 0.0
        for j in range(d):
            nv += v[j] * v[j]
        nv = math.sqrt(nv)
        if nv > tol:
            for j in range(d):
                U[m, j] = v[j] / nv
            m += 1
        if m == d:
            break
    return chosen[:n_chosen]


@njit(cache=True)
def _invert_spd(V, rel_tol):
    """Gauss-Jordan inverse with pivoting; returns (inverse, ok)."""
    d = V.shape[0]
    W = V.copy()
    M = np.eye(d)
    scale = 0.0
    for i in range(d):
        scale = max(scale, abs(W[i, i]))
    for c in range(d):
        piv = c
        for r in range(c + 1, d):
            if abs(W[r, c]) > abs(W[piv, c]):
                piv = r
        if abs(W[piv, c]) <= rel_tol * scale:
            return M, False
        if piv != c:
            for j in range(d):
                W[c, j], W[piv, j] = W[piv, j], W[c, j]
                M[c, j], M[piv, j] = M[piv, j], M[c, j]
        inv = 1.0 / W[c, c]
        for j in range(d):
            W[c, j] *= inv
            M[c, j] *= inv
        for r in range(d):
            if r != c and W[r, c] != 0.0:
                f = W[r, c]
                for j in range(d):
                    W[r, j] -= f * W[c, j]
                    M[r, j] -= f * M[c, j]
    return M, True


@njit(cache=True)
def _fresh_leverages(A, M, lev):
    K, d = A.shape
    for k in range(K):
        s = 0.0
        for i in range(d):
            t = 0.0
            for j in range(d):
                t += M[i, j] * A[k, j]
            s += A[k, i] * t
        lev[k] = max(s, 0.0)


@njit(cache=True)
def greedy_kernel(A, counts, Vbar, tau, cap, stop, rel_tol):
    """Greedy leverage rounding with rank-one inverse updates.

    ``counts`` and ``Vbar`` are updated in place. Returns (status, tau,
    leverages); on OK the leverages come from a freshly inverted ``Vbar``.
    """
    K, d = A.shape
    lev = np.empty(K)
    M, ok = _invert_spd(Vbar, rel_tol)
    if not ok:
        return SINGULAR, tau, lev
    _fresh_leverages(A, M, lev)
    fresh = True
    u = np.empty(d)
    while True:
        best = 0
        for k in range(1, K):
            if lev[k] > lev[best]:
                best = k
        if lev[best] <= stop:
            if fresh:
                return OK, tau, lev
            # rank-one updates drift; confirm on a fresh inverse
            M, ok = _invert_spd(Vbar, rel_tol)
            if not ok:
                return SINGULAR, tau, lev
            _fresh_leverages(A, M, lev)
            fresh = True
            continue
        if tau >= cap:
            return CAP_REACHED, tau, lev
        counts[best] += 1
        tau += 1
        fresh = False
        for i in range(d):
            for j in range(d):
                Vbar[i, j] += A[best, i] * A[best, j]
        for i in range(d):
            t = 0.0
            for j in range(d):
                t += M[i, j] * A[best, j]
            u[i] = t
        denom = 1.0
        for i in range(d):
            denom += A[best, i] * u[i]
        for i in range(d):
            for j in range(d):
                M[i, j] -= u[i] * u[j] / denom
        for k in range(K):
            z = 0.0
            for i in range(d):
                z += A[k, i] * u[i]
            lev[k] -= z * z / denom


@njit(cache=True)
def design_kernel(A, span_tol, cap, stop, rel_tol):
    """Spanner seed plus greedy rounding in one call.

    Returns (status, counts, tau, leverages, Vbar).
    """
    K, d = A.shape
    counts = np.zeros(K, dtype=np.int64)
    if K <= 2 * d:
        counts[:] = 1
    else:
        scale = 0.0
        for k in range(K):
            s = 0.0
            for j in range(d):
                s += A[k, j] * A[k, j]
            scale = max(scale, s)
        tol = span_tol * max(math.sqrt(scale), 2.2250738585072014e-308)
        for idx in spanner_kernel(A, span_tol, tol):
            counts[idx] += 1
    Vbar = np.zeros((d, d))
    tau = 0
    for k in range(K):
        if counts[k]:
            tau += 1
            for i in range(d):
                for j in range(d):
                    Vbar[i, j] += A[k, i] * A[k, j]
    status, tau, lev = greedy_kernel(A, counts, Vbar, tau, cap, stop, rel_tol)
    return status, counts, tau, lev, Vbar


@njit(cache=True, error_model="numpy")
def linmed_kernel(A, V_inv, theta, beta, alpha_emp, alpha_opt, ver, zero_dist, max_exponent, tiny, f_floor,
                  span_tol, cap, stop, rel_tol):
    """One LinMED distribution, mirroring ``policies.linmed_distribution``.

    Returns (status, probs, f, q, p_prime, best, gaps, denominator, leverages).
    A status other than OK means the design step needs the numpy path.
    """
    K, d = A.shape
    means = np.zeros(K)
    for k in range(K):
        s = 0.0
        for j in range(d):
            s += A[k, j] * theta[j]
        means[k] = s
    best = 0
    for k in range(1, K):
        if means[k] > means[best]:
            best = k

    gaps = np.empty(K)
    f = np.empty(K)
    lev = np.empty(K)
    diff = np.empty(d)
    row = np.empty(d)
    for k in range(K):
        gaps[k] = max(means[best] - means[k], 0.0)
        for j in range(d):
            diff[j] = A[best, j] - A[k, j]
        dist2 = 0.0
        lv = 0.0
        for i in range(d):
            s = 0.0
            r = 0.0
            for j in range(d):
                s += V_inv[i, j] * diff[j]
                r += V_inv[i, j] * A[k, j]
            dist2 += diff[i] * s
            lv += A[k, i] * r
        dist2 = max(dist2, 0.0)
        lev[k] = max(lv, 0.0)
        if dist2 <= zero_dist:
            expo = 0.0
        else:
            expo = gaps[k] * gaps[k] / (beta * dist2)
        f[k] = tiny if expo > max_exponent else math.exp(-expo)

    # design over the f-reshaped arm set
    threshold = f_floor if ver == 0 else math.exp(-1.0)
    keep = np.empty(K, dtype=np.int64)
    n_keep = 0
    for k in range(K):
        if f[k] >= threshold:
            keep[n_keep] = k
            n_keep += 1
    q_opt = np.zeros(K)
    B = np.empty((n_keep, d))
    informative = False
    for m in range(n_keep):
        w = math.sqrt(f[keep[m]]) if ver == 0 else 1.0
        for j in range(d):
            B[m, j] = w * A[keep[m], j]
            if B[m, j] != 0.0:
                informative = True
    if n_keep == 0 or not informative:
        if n_keep == 0:
            for k in range(K):
                q_opt[k] = 1.0 / K
        else:
            for m in range(n_keep):
                q_opt[keep[m]] = 1.0 / n_keep
    else:
        status, counts, tau, dlev, Vbar = design_kernel(B, span_tol, cap, stop, rel_tol)
        if status != OK or tau > cap:
            return status if status != OK else CAP_REACHED, f, f, f, f, best, gaps, 0.0, lev
        for m in range(n_keep):
            q_opt[keep[m]] = counts[m] / tau

    uniform = (1.0 - alpha_opt - alpha_emp) / K
    q = np.empty(K)
    p_prime = np.empty(K)
    denominator = 0.0
    for k in range(K):
        q[k] = alpha_opt * q_opt[k] + uniform
    q[best] += alpha_emp
    for k in range(K):
        p_prime[k] = q[k] * f[k]
        denominator += p_prime[k]
    for k in range(K):
        p_prime[k] /= denominator

    probs = p_prime.copy()
    for k in range(K):
        if lev[k] > 1.0:
            for m in range(K):
                probs[m] = 0.5 * p_prime[m]
            probs[k] += 0.5
            break
    return OK, probs, f, q, p_prime, best, gaps, denominator, lev


@njit(cache=True)
def argmax_counts_kernel(Z, mean, L, A):
    """How often each arm wins argmax_a <mean + L z, a> over the rows z of Z."""
    M, d = Z.shape
    K = A.shape[0]
    counts = np.zeros(K, dtype=np.int64)
    theta = np.empty(d)
    for m in range(M):
        for i in range(d):
            s = mean[i]
            for j in range(d):
                s += L[i, j] * Z[m, j]
            theta[i] = s
        best = 0
        best_val = -np.inf
        for k in range(K):
            v = 0.0
            for i in range(d):
                v += A[k, i] * theta[i]
            if v > best_val:
                best_val = v
                best = k
        counts[best] += 1
    return counts
