"""Common spatial pattern filter banks and log-variance features.

CSP finds spatial filters that maximize the variance ratio between two
classes. Filters are eigenvectors of the generalized problem

    cov0 @ w = mu * (cov0 + cov1) @ w

whose eigenvalues ``mu`` order identically to those of inv(cov1) @ cov0
(``lambda = mu / (1 - mu)``). The composite matrix is Cholesky-whitened and
a symmetric eigensolver is applied to the whitened ``cov0``; this is
numerically stable where the nonsymmetric product formulation is not.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import kernels
from .data import Epoch, SpatialCovariance, _freeze
from .errors import ConditioningError, DegenerateFeatureError, DimensionError

#: Filters kept per class when no explicit count is given (common practice;
#: yields a 6-dimensional feature vector).
DEFAULT_FILTERS_PER_CLASS = 3

_COMPOSITE_RIDGE = 1e-10


@dataclass(frozen=True)
class CspFilterBank:
    """C×2F filter matrix with per-class halves.

    Columns 1..F (``w0``) carry the largest variance-ratio eigenvalues in
    descending order; columns F+1..2F (``w1``) the smallest in ascending
    order. Columns have unit Euclidean norm with the largest-magnitude
    entry positive.
    """

    w_star: np.ndarray
    filters_per_class: int
    eigenvalues: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w_star, dtype=np.float64)
        f = self.filters_per_class
        if f < 1:
            raise DimensionError("need at least one filter per class")
        if w.ndim != 2 or w.shape[1] != 2 * f:
            raise DimensionError(f"filter matrix must be C x {2 * f}, got {w.shape}")
        if 2 * f > w.shape[0]:
            raise DimensionError(f"2F = {2 * f} filters exceed {w.shape[0]} channels")
        norms = np.linalg.norm(w, axis=0)
        if not np.allclose(norms, 1.0, atol=1e-9):
            raise DimensionError("filter columns must have unit norm")
        ev = np.asarray(self.eigenvalues, dtype=np.float64)
        if ev.shape != (2 * f,):
            raise DimensionError("one eigenvalue per filter required")
        object.__setattr__(self, "w_star", _freeze(w))
        object.__setattr__(self, "eigenvalues", _freeze(ev))

    @property
    def channels(self) -> int:
        return self.w_star.shape[0]

    @property
    def w0(self) -> np.ndarray:
        return self.w_star[:, : self.filters_per_class]

    @property
    def w1(self) -> np.ndarray:
        return self.w_star[:, self.filters_per_class :]


def compute_csp(
    sigma0: SpatialCovariance,
    sigma1: SpatialCovariance,
    filters_per_class: int = DEFAULT_FILTERS_PER_CLASS,
) -> CspFilterBank:
    """Solve for the CSP filter bank from two class-mean covariances.

    Parameters
    ----------
    sigma0, sigma1 : SpatialCovariance
        Class-mean covariances of identical dimension.
    filters_per_class : int
        F filters per class; 2F must not exceed the channel count.

    Returns
    -------
    CspFilterBank
        One eigendecomposition yields both halves: ``w0`` maximizes
        class-0 variance relative to class 1, ``w1`` the reverse.
    """
    s0, s1 = sigma0.matrix, sigma1.matrix
    if s0.shape != s1.shape:
        raise DimensionError(f"covariance shapes differ: {s0.shape} vs {s1.shape}")
    c = s0.shape[0]
    f = filters_per_class
    if f < 1 or 2 * f > c:
        raise DimensionError(f"need 1 <= 2F <= C, got F={f}, C={c}")

    composite = s0 + s1
    eps = _COMPOSITE_RIDGE * np.trace(composite) / c
    composite = composite + eps * np.eye(c)
    try:
        chol = np.linalg.cholesky(composite)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError("composite covariance is numerically singular") from exc

    half = scipy.linalg.solve_triangular(chol, s0, lower=True)
    whitened = scipy.linalg.solve_triangular(chol, half.T, lower=True)
    mu, u = np.linalg.eigh(0.5 * (whitened + whitened.T))
    w_full = scipy.linalg.solve_triangular(chol.T, u, lower=False)

    # eigh sorts ascending: last F columns carry the largest ratios.
    order = list(range(c - 1, c - f - 1, -1)) + list(range(f))
    w = w_full[:, order]
    w /= np.linalg.norm(w, axis=0)
    peak = np.abs(w).argmax(axis=0)
    w *= np.sign(w[peak, np.arange(2 * f)])

    # Variance-ratio eigenvalues are recovered as Rayleigh quotients of the
    # original matrices, which keeps them independent of the ridge.
    num = np.einsum("cf,cd,df->f", w, s0, w)
    den = np.einsum("cf,cd,df->f", w, s1, w)
    with np.errstate(divide="ignore"):
        eigenvalues = num / den
    return CspFilterBank(w, f, eigenvalues)


def apply_filters(bank: CspFilterBank, epoch: Epoch) -> np.ndarray:
    """Project an epoch: returns W*.T @ X with shape (2F, T)."""
    if epoch.channels != bank.channels:
        raise DimensionError(
            f"epoch has {epoch.channels} channels, bank expects {bank.channels}"
        )
    return bank.w_star.T @ epoch.data


def log_variance_features(filtered: np.ndarray) -> np.ndarray:
    """Log share of total variance per filtered row.

    ``x_i = log((Y @ Y.T)_ii / trace(Y @ Y.T))`` for a filtered epoch Y.
    Entries are <= 0 and sum to 1 after exponentiation.
    """
    y = np.asarray(filtered, dtype=np.float64)
    if y.ndim != 2:
        raise DimensionError(f"filtered epoch must be 2-D, got {y.shape}")
    powers = np.einsum("kt,kt->k", y, y)
    if np.any(powers <= 0.0):
        raise DegenerateFeatureError(int(np.argmin(powers)))
    return np.log(powers / powers.sum())


def feature_matrix(bank: CspFilterBank, data: np.ndarray) -> np.ndarray:
    """Log-variance features of an (N, C, T) epoch stack, shape (N, 2F)."""
    if data.shape[1] != bank.channels:
        raise DimensionError(
            f"stack has {data.shape[1]} channels, bank expects {bank.channels}"
        )
    feats, powers = kernels.log_power_features(data, bank.w_star)
    if np.any(powers <= 0.0):
        bad = np.argwhere(powers <= 0.0)[0]
        raise DegenerateFeatureError(int(bad[1]))
    return feats
