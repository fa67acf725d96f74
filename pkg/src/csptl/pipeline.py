"""Shared CSP + LDA training flow over epoch stacks.

All strategy implementations funnel through :func:`train_weighted` so that
path equivalences hold exactly: plain pooled training is weighted training
with unit weights, and appending zero-weight samples leaves the result
bit-identical (the class-mean and LDA accumulations are sequential).
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .csp import CspFilterBank, compute_csp, feature_matrix
from .data import SpatialCovariance, _mean_cov_from_stack
from .errors import DegenerateEpochError, EmptyClassError
from .lda import LdaModel, lda_score, lda_train


def normalized_covariances(data: np.ndarray) -> np.ndarray:
    """(N, C, C) trace-normalized per-epoch covariances of an (N, C, T) stack."""
    covs, traces = kernels.epoch_covariances(data, True)
    if np.any(traces <= 0.0):
        raise DegenerateEpochError("cannot trace-normalize a zero epoch")
    return covs


def class_means_from_stack(
    cov_stack: np.ndarray, labels: np.ndarray, weights: np.ndarray
) -> tuple[SpatialCovariance, SpatialCovariance]:
    """Weighted per-class means of precomputed normalized covariances."""
    means = []
    for label in (0, 1):
        mask = labels == label
        if not mask.any() or float(weights[mask].sum()) <= 0.0:
            raise EmptyClassError(f"class {label} has no weight in the training set")
        means.append(
            SpatialCovariance(
                _mean_cov_from_stack(cov_stack[mask], weights[mask]), normalized=True
            )
        )
    return means[0], means[1]


def train_weighted(
    data: np.ndarray,
    labels: np.ndarray,
    weights: np.ndarray,
    filters_per_class: int,
    cov_stack: np.ndarray | None = None,
) -> tuple[CspFilterBank, LdaModel]:
    """CSP from weighted class-mean covariances, LDA on weighted features.

    ``cov_stack`` may pass precomputed normalized covariances of ``data``.
    """
    if cov_stack is None:
        cov_stack = normalized_covariances(data)
    sigma0, sigma1 = class_means_from_stack(cov_stack, labels, weights)
    bank = compute_csp(sigma0, sigma1, filters_per_class)
    feats = feature_matrix(bank, data)
    model = lda_train(feats, labels, weights)
    return bank, model


def train_from_means(
    sigma0: SpatialCovariance,
    sigma1: SpatialCovariance,
    data: np.ndarray,
    labels: np.ndarray,
    filters_per_class: int,
) -> tuple[CspFilterBank, LdaModel]:
    """CSP from externally fused class means, LDA on the given epochs."""
    bank = compute_csp(sigma0, sigma1, filters_per_class)
    feats = feature_matrix(bank, data)
    model = lda_train(feats, labels)
    return bank, model


def predict_stack(bank: CspFilterBank, model: LdaModel, data: np.ndarray) -> np.ndarray:
    """Predicted labels for an (N, C, T) stack; score ties go to class 0."""
    scores = lda_score(model, feature_matrix(bank, data))
    return (scores > 0.0).astype(np.int64)


def accuracy(
    bank: CspFilterBank, model: LdaModel, data: np.ndarray, labels: np.ndarray
) -> float:
    return float(np.mean(predict_stack(bank, model, data) == labels))
