"""Dual-backend numeric kernels for the hot inner loops.

Every kernel exists twice: a numba ``@njit`` build of the reference
implementation and a numpy/Python fallback with identical semantics.
The active backend is chosen at import time from the ``CSPTL_BACKEND``
environment variable (``numba``, ``numpy``, or ``auto``; default
``auto`` = numba when importable). ``benchmarks/backend_bench.py``
times one backend against the other.

Accumulation-order guarantees the rest of the package relies on:

* ``epoch_covariances`` computes each (i, j) pair once and mirrors it,
  so outputs are exactly symmetric.
* ``weighted_mean_mats`` and ``weighted_lda_stats`` accumulate
  sequentially over samples in both backends, so appending zero-weight
  samples leaves results bit-identical.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False


def resolve_backend(choice: str, have_numba: bool = HAVE_NUMBA) -> str:
    """Map a CSPTL_BACKEND value onto 'numba' or 'numpy'."""
    choice = (choice or "auto").strip().lower()
    if choice == "auto":
        return "numba" if have_numba else "numpy"
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        if not have_numba:
            raise RuntimeError("CSPTL_BACKEND=numba but numba is not importable")
        return "numba"
    raise RuntimeError(f"unknown CSPTL_BACKEND value: {choice!r}")


BACKEND = resolve_backend(os.environ.get("CSPTL_BACKEND", "auto"))


# ---------------------------------------------------------------------------
# batch epoch covariance
# ---------------------------------------------------------------------------

def _epoch_covariances_loop(data, normalize):
    n, c, t = data.shape
    covs = np.empty((n, c, c))
    traces = np.empty(n)
    for k in range(n):
        x = data[k]
        tr = 0.0
        for i in range(c):
            for j in range(i, c):
                s = 0.0
                for u in range(t):
                    s += x[i, u] * x[j, u]
                covs[k, i, j] = s
                covs[k, j, i] = s
            tr += covs[k, i, i]
        traces[k] = tr
        if normalize and tr > 0.0:
            for i in range(c):
                for j in range(c):
                    covs[k, i, j] = covs[k, i, j] / tr
    return covs, traces


def epoch_covariances_numpy(data, normalize):
    """Per-epoch X @ X.T over a (N, C, T) stack; exactly symmetric output."""
    n = data.shape[0]
    prods = data @ data.transpose(0, 2, 1)
    upper = np.triu(prods)
    covs = upper + np.triu(prods, 1).transpose(0, 2, 1)
    traces = np.einsum("kii->k", covs)
    if normalize:
        safe = np.where(traces > 0.0, traces, 1.0)
        covs = covs / safe[:, None, None]
    return covs, traces


# ---------------------------------------------------------------------------
# batch log-variance features
# ---------------------------------------------------------------------------

def _log_power_features_loop(data, w):
    n = data.shape[0]
    k = w.shape[1]
    wt = np.ascontiguousarray(w.T)
    feats = np.empty((n, k))
    powers = np.empty((n, k))
    for e in range(n):
        y = np.dot(wt, data[e])
        total = 0.0
        for i in range(k):
            p = 0.0
            for u in range(y.shape[1]):
                p += y[i, u] * y[i, u]
            powers[e, i] = p
            total += p
        for i in range(k):
            if powers[e, i] > 0.0:
                feats[e, i] = np.log(powers[e, i] / total)
            else:
                feats[e, i] = np.nan
    return feats, powers


def log_power_features_numpy(data, w):
    """Row powers and log power fractions of W.T @ X per epoch."""
    y = np.einsum("ck,ect->ekt", w, data, optimize=True)
    powers = np.einsum("ekt,ekt->ek", y, y, optimize=True)
    totals = powers.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        feats = np.log(powers / totals)
    feats[powers <= 0.0] = np.nan
    return feats, powers


# ---------------------------------------------------------------------------
# sequential weighted accumulations
# ---------------------------------------------------------------------------

def _weighted_mean_mats_impl(mats, weights):
    c = mats.shape[1]
    acc = np.zeros((c, c))
    total = 0.0
    for k in range(mats.shape[0]):
        wk = weights[k]
        total += wk
        acc += wk * mats[k]
    return acc, total


def _weighted_lda_stats_impl(x, labels, weights):
    n, d = x.shape
    mu = np.zeros((2, d))
    wsum = np.zeros(2)
    for k in range(n):
        c = labels[k]
        wsum[c] += weights[k]
        mu[c] += weights[k] * x[k]
    for c in range(2):
        if wsum[c] > 0.0:
            mu[c] = mu[c] / wsum[c]
    scatter = np.zeros((d, d))
    for k in range(n):
        dev = x[k] - mu[labels[k]]
        scatter += weights[k] * np.outer(dev, dev)
    return mu[0], mu[1], scatter, wsum[0], wsum[1]


# ---------------------------------------------------------------------------
# pairwise squared distances
# ---------------------------------------------------------------------------

def pairwise_sq_dists(a, b):
    """Squared Euclidean distances via the Gram-matrix identity.

    BLAS beats a compiled scalar loop here at any representation width, so
    both backends share this implementation.
    """
    aa = np.einsum("id,id->i", a, a)
    bb = np.einsum("jd,jd->j", b, b)
    out = aa[:, None] + bb[None, :] - 2.0 * (a @ b.T)
    np.clip(out, 0.0, None, out)
    return out


# ---------------------------------------------------------------------------
# projections
# ---------------------------------------------------------------------------

def _box_band_project_impl(v, hi_box, lo_sum, hi_sum):
    n = v.shape[0]
    x = np.empty(n)
    for i in range(n):
        x[i] = min(max(v[i], 0.0), hi_box)
    s = x.sum()
    if lo_sum <= s <= hi_sum:
        return x
    target = hi_sum if s > hi_sum else lo_sum
    # Solve sum(clip(v + shift, 0, hi_box)) = target by bisection; the
    # clamped sum is nondecreasing in the shift.
    lo = -np.max(v)
    hi = hi_box - np.min(v)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        s = 0.0
        for i in range(n):
            s += min(max(v[i] + mid, 0.0), hi_box)
        if s < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * max(1.0, hi_box):
            break
    shift = 0.5 * (lo + hi)
    for i in range(n):
        x[i] = min(max(v[i] + shift, 0.0), hi_box)
    return x


def _simplex_project_impl(v):
    n = v.shape[0]
    u = np.sort(v)[::-1]
    css = 0.0
    rho = -1
    theta = 0.0
    for i in range(n):
        css += u[i]
        t = (css - 1.0) / (i + 1.0)
        if u[i] > t:
            rho = i
            theta = t
    x = np.empty(n)
    for i in range(n):
        x[i] = max(v[i] - theta, 0.0)
    return x


# ---------------------------------------------------------------------------
# projected-gradient solvers
# ---------------------------------------------------------------------------

def _kmm_pgd_impl(k_mat, q, hi_box, lo_sum, hi_sum, max_iter, tol):
    n = k_mat.shape[0]
    # Gershgorin bound on the largest eigenvalue; entries are nonnegative.
    lip = 0.0
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += abs(k_mat[i, j])
        if s > lip:
            lip = s
    step = 1.0 / lip if lip > 0.0 else 1.0

    beta = _box_band_project_impl(np.ones(n), hi_box, lo_sum, hi_sum)
    kb = np.dot(k_mat, beta)
    f = 0.5 * np.dot(beta, kb) - np.dot(q, beta)
    trace = np.empty(max_iter + 1)
    trace[0] = f
    best_f = f
    best_beta = beta.copy()
    n_iter = 0
    for it in range(1, max_iter + 1):
        grad = kb - q
        beta = _box_band_project_impl(beta - step * grad, hi_box, lo_sum, hi_sum)
        kb = np.dot(k_mat, beta)
        f_new = 0.5 * np.dot(beta, kb) - np.dot(q, beta)
        trace[it] = f_new
        n_iter = it
        if f_new < best_f:
            best_f = f_new
            best_beta = beta.copy()
        improvement = f - f_new
        f = f_new
        if improvement < tol:
            break
    return best_beta, best_f, trace[: n_iter + 1], n_iter


def _simplex_pgd_impl(a_mat, c_vec, const, step, max_iter, tol):
    z = a_mat.shape[0]
    w = np.full(z, 1.0 / z)
    aw = np.dot(a_mat, w)
    f = np.dot(w, aw) - 2.0 * np.dot(c_vec, w) + const
    trace = np.empty(max_iter + 1)
    trace[0] = f
    best_f = f
    best_w = w.copy()
    n_iter = 0
    for it in range(1, max_iter + 1):
        grad = 2.0 * (aw - c_vec)
        w = _simplex_project_impl(w - step * grad)
        aw = np.dot(a_mat, w)
        f_new = np.dot(w, aw) - 2.0 * np.dot(c_vec, w) + const
        trace[it] = f_new
        n_iter = it
        if f_new < best_f:
            best_f = f_new
            best_w = w.copy()
        improvement = f - f_new
        f = f_new
        if improvement < tol:
            break
    return best_w, best_f, trace[: n_iter + 1], n_iter


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------

if HAVE_NUMBA:
    # Sequential compilation throughout: per-call work is small enough that
    # parallel-region launch overhead dominates any gain, and sequential
    # loops keep results independent of the thread count.
    epoch_covariances_numba = njit(cache=True)(_epoch_covariances_loop)
    log_power_features_numba = njit(cache=True)(_log_power_features_loop)
    weighted_mean_mats_numba = njit(cache=True)(_weighted_mean_mats_impl)
    weighted_lda_stats_numba = njit(cache=True)(_weighted_lda_stats_impl)
    box_band_project_numba = njit(cache=True)(_box_band_project_impl)
    simplex_project_numba = njit(cache=True)(_simplex_project_impl)

weighted_mean_mats_numpy = _weighted_mean_mats_impl
weighted_lda_stats_numpy = _weighted_lda_stats_impl
box_band_project_numpy = _box_band_project_impl
simplex_project_numpy = _simplex_project_impl
kmm_pgd_numpy = _kmm_pgd_impl
simplex_pgd_numpy = _simplex_pgd_impl

if HAVE_NUMBA:
    # The projected-gradient loops call the projection helpers, so they are
    # re-jitted as closures over the compiled versions.
    @njit(cache=True)
    def kmm_pgd_numba(k_mat, q, hi_box, lo_sum, hi_sum, max_iter, tol):
        n = k_mat.shape[0]
        lip = 0.0
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += abs(k_mat[i, j])
            if s > lip:
                lip = s
        step = 1.0 / lip if lip > 0.0 else 1.0

        beta = box_band_project_numba(np.ones(n), hi_box, lo_sum, hi_sum)
        kb = np.dot(k_mat, beta)
        f = 0.5 * np.dot(beta, kb) - np.dot(q, beta)
        trace = np.empty(max_iter + 1)
        trace[0] = f
        best_f = f
        best_beta = beta.copy()
        n_iter = 0
        for it in range(1, max_iter + 1):
            grad = kb - q
            beta = box_band_project_numba(beta - step * grad, hi_box, lo_sum, hi_sum)
            kb = np.dot(k_mat, beta)
            f_new = 0.5 * np.dot(beta, kb) - np.dot(q, beta)
            trace[it] = f_new
            n_iter = it
            if f_new < best_f:
                best_f = f_new
                best_beta = beta.copy()
            improvement = f - f_new
            f = f_new
            if improvement < tol:
                break
        return best_beta, best_f, trace[: n_iter + 1], n_iter

    @njit(cache=True)
    def simplex_pgd_numba(a_mat, c_vec, const, step, max_iter, tol):
        z = a_mat.shape[0]
        w = np.full(z, 1.0 / z)
        aw = np.dot(a_mat, w)
        f = np.dot(w, aw) - 2.0 * np.dot(c_vec, w) + const
        trace = np.empty(max_iter + 1)
        trace[0] = f
        best_f = f
        best_w = w.copy()
        n_iter = 0
        for it in range(1, max_iter + 1):
            grad = 2.0 * (aw - c_vec)
            w = simplex_project_numba(w - step * grad)
            aw = np.dot(a_mat, w)
            f_new = np.dot(w, aw) - 2.0 * np.dot(c_vec, w) + const
            trace[it] = f_new
            n_iter = it
            if f_new < best_f:
                best_f = f_new
                best_w = w.copy()
            improvement = f - f_new
            f = f_new
            if improvement < tol:
                break
        return best_w, best_f, trace[: n_iter + 1], n_iter


if BACKEND == "numba":
    epoch_covariances = epoch_covariances_numba
    log_power_features = log_power_features_numba
    weighted_mean_mats = weighted_mean_mats_numba
    weighted_lda_stats = weighted_lda_stats_numba
    box_band_project = box_band_project_numba
    simplex_project = simplex_project_numba
    kmm_pgd = kmm_pgd_numba
    simplex_pgd = simplex_pgd_numba
else:
    epoch_covariances = epoch_covariances_numpy
    log_power_features = log_power_features_numpy
    weighted_mean_mats = weighted_mean_mats_numpy
    weighted_lda_stats = weighted_lda_stats_numpy
    box_band_project = box_band_project_numpy
    simplex_project = simplex_project_numpy
    kmm_pgd = kmm_pgd_numpy
    simplex_pgd = simplex_pgd_numpy
