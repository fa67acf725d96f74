"""Instance-based transfer learning: kernel-mean-matching sample weights.

Source epochs are reweighted to minimize the maximum mean discrepancy
between the reweighted source distribution and the target distribution in
a Gaussian-kernel feature space:

    minimize   || (1/n) * sum_j beta_j phi(x_s_j) - (1/m) * sum_j phi(x_t_j) ||^2
    subject to 0 <= beta_j <= b  and  |sum_j beta_j - n| <= n * epsilon

which expands (up to an additive constant, scaled by n^2) to

    minimize 0.5 * beta @ K @ beta - (n/m) * kappa @ beta

with K the source-source kernel matrix and kappa the summed
source-target kernel values. The solver is projected gradient descent;
the feasible set (box intersected with the sum band) is handled by a
clamped-sum shift found by bisection.

Epochs enter the kernel through a label-free representation: the
trace-normalized covariance, vectorized as its upper triangle with
off-diagonal entries scaled by sqrt(2) so Euclidean distances equal
Frobenius distances between the matrices.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .csp import CspFilterBank
from .data import Epoch, LabeledEpoch, epoch_covariance, _freeze
from .errors import ConfigError, DimensionError
from .lda import LdaModel
from .pipeline import normalized_covariances, train_weighted

MAX_ITER = 10000
STOP_TOL = 1e-12

_KERNEL_RIDGE = 1e-8
_FEASIBILITY_TOL = 1e-6


@dataclass(frozen=True)
class KmmConfig:
    """Constraint and kernel parameters for the reweighting problem.

    ``epsilon=None`` selects ``(sqrt(n) - 1) / sqrt(n)`` from the source
    count at solve time; ``bandwidth="median"`` selects the median pairwise
    distance over all source and target representations.
    """

    b: float = 1000.0
    epsilon: float | None = None
    bandwidth: float | str = "median"

    def __post_init__(self):
        if self.b <= 0.0:
            raise ConfigError("box bound b must be positive")
        if self.epsilon is not None and self.epsilon < 0.0:
            raise ConfigError("epsilon must be >= 0")
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "median":
                raise ConfigError(f"unknown bandwidth {self.bandwidth!r}")
        elif self.bandwidth <= 0.0:
            raise ConfigError("bandwidth must be positive")


@dataclass(frozen=True)
class InstanceWeights:
    """Per-source-epoch weights satisfying the box and sum-band constraints."""

    beta: np.ndarray
    b: float
    epsilon: float
    objective: float
    converged: bool
    iterations: int

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        if beta.ndim != 1:
            raise DimensionError("beta must be 1-D")
        n = beta.shape[0]
        if np.any(beta < -_FEASIBILITY_TOL) or np.any(beta > self.b + _FEASIBILITY_TOL):
            raise ConfigError("beta violates the box constraint")
        if abs(beta.sum() - n) > n * self.epsilon + _FEASIBILITY_TOL:
            raise ConfigError("beta violates the sum constraint")
        object.__setattr__(self, "beta", _freeze(beta))


def kmm_representation(epoch: Epoch) -> np.ndarray:
    """Vectorized trace-normalized covariance of one epoch.

    Length C(C+1)/2; off-diagonal entries are scaled by sqrt(2) so the
    Euclidean inner product of two representations equals the Frobenius
    inner product of the underlying matrices.
    """
    cov = epoch_covariance(epoch, normalize=True).matrix
    return _vectorize_covs(cov[None, :, :])[0]


def _vectorize_covs(covs: np.ndarray) -> np.ndarray:
    c = covs.shape[1]
    iu, ju = np.triu_indices(c)
    scale = np.where(iu == ju, 1.0, np.sqrt(2.0))
    return covs[:, iu, ju] * scale


def representations_from_stack(data: np.ndarray) -> np.ndarray:
    """(N, C(C+1)/2) representations of an (N, C, T) epoch stack."""
    return _vectorize_covs(normalized_covariances(data))


def median_bandwidth(reps) -> float:
    """Median pairwise Euclidean distance; falls back to 1 when it is zero."""
    x = np.asarray(reps, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ConfigError("need at least two representation vectors")
    sq = kernels.pairwise_sq_dists(x, x)
    iu, ju = np.triu_indices(x.shape[0], k=1)
    med = float(np.median(np.sqrt(sq[iu, ju])))
    return med if med > 0.0 else 1.0


def _gaussian_kernel(sq_dists: np.ndarray, bandwidth: float) -> np.ndarray:
    return np.exp(sq_dists / (-2.0 * bandwidth * bandwidth))


def kmm_weights(
    source_reps,
    target_reps,
    cfg: KmmConfig = KmmConfig(),
    precomputed_source_sq_dists: np.ndarray | None = None,
) -> InstanceWeights:
    """Solve the reweighting problem for source representations.

    Parameters
    ----------
    source_reps : (n, d) array
    target_reps : (m, d) array
    cfg : KmmConfig
    precomputed_source_sq_dists : optional (n, n) array
        Squared source-source distances, to avoid recomputation across
        repeated solves against growing target sets.
    """
    xs = np.asarray(source_reps, dtype=np.float64)
    xt = np.asarray(target_reps, dtype=np.float64)
    if xs.ndim != 2 or xt.ndim != 2 or xs.shape[1] != xt.shape[1]:
        raise DimensionError("representations must be 2-D with equal width")
    n, m = xs.shape[0], xt.shape[0]
    if n < 1 or m < 1:
        raise ConfigError("need at least one source and one target sample")

    epsilon = cfg.epsilon if cfg.epsilon is not None else (np.sqrt(n) - 1.0) / np.sqrt(n)
    if n * (1.0 - epsilon) > n * cfg.b:
        raise ConfigError(
            f"infeasible constraints: sum >= {n * (1.0 - epsilon):g} "
            f"unreachable with b = {cfg.b:g}"
        )

    ss = precomputed_source_sq_dists
    if ss is None:
        ss = kernels.pairwise_sq_dists(xs, xs)
    st = kernels.pairwise_sq_dists(xs, xt)

    if cfg.bandwidth == "median":
        iu, ju = np.triu_indices(n, k=1)
        tt = kernels.pairwise_sq_dists(xt, xt)
        it, jt = np.triu_indices(m, k=1)
        all_sq = np.concatenate([ss[iu, ju], st.ravel(), tt[it, jt]])
        med = float(np.median(np.sqrt(all_sq))) if all_sq.size else 0.0
        bandwidth = med if med > 0.0 else 1.0
    else:
        bandwidth = float(cfg.bandwidth)

    k_mat = _gaussian_kernel(ss, bandwidth)
    k_mat = k_mat + (_KERNEL_RIDGE * np.mean(np.diag(k_mat))) * np.eye(n)
    q = (n / m) * _gaussian_kernel(st, bandwidth).sum(axis=1)

    beta, objective, _, n_iter = kernels.kmm_pgd(
        k_mat, q, cfg.b, n * (1.0 - epsilon), n * (1.0 + epsilon), MAX_ITER, STOP_TOL
    )
    return InstanceWeights(
        beta, cfg.b, epsilon, float(objective), n_iter < MAX_ITER, n_iter
    )


def weighted_fused_training(
    target_labeled: Sequence[LabeledEpoch],
    source_labeled: Sequence[LabeledEpoch],
    beta,
    filters_per_class: int,
) -> tuple[CspFilterBank, LdaModel]:
    """Train CSP+LDA on target epochs (weight 1) plus reweighted source epochs.

    The weights are applied within each class to both the class-mean
    covariances and the classifier; ``beta`` of all ones reproduces plain
    pooled training exactly, and ``beta`` of all zeros (with target epochs
    present) reproduces target-only training exactly.
    """
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (len(source_labeled),):
        raise DimensionError("one weight per source epoch required")
    if np.any(beta < 0.0):
        raise ConfigError("source weights must be nonnegative")
    episodes = list(target_labeled) + list(source_labeled)
    if not episodes:
        raise ConfigError("need at least one epoch")
    data = np.stack([le.epoch.data for le in episodes])
    labels = np.array([le.label for le in episodes], dtype=np.int64)
    weights = np.concatenate([np.ones(len(target_labeled)), beta])
    return train_weighted(data, labels, weights, filters_per_class)
