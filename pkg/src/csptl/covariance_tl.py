"""Covariance-fusion transfer learning.

Two ways of enhancing the target subject's class-mean covariances with
source-subject covariances before CSP:

* ``cm1_*`` — divergence-weighted fusion. Source subjects are weighted by
  the inverse KL divergence between their pooled (label-free) Gaussian data
  distribution and the target's, then blended with the target covariance:
  ``(1 - lam) * sigma_t + lam * sum_z alpha_z * sigma_s_z`` per class.

* ``cm2_*`` — selected-subject regularization. A greedily chosen subset of
  source subjects is averaged unweighted, and the blend factor ``lam`` is
  set from leave-one-out and cross-training accuracies.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import SpatialCovariance, SubjectDataset, _freeze
from .errors import (
    AffinityError,
    ConditioningError,
    ConfigError,
    DimensionError,
)
from .pipeline import accuracy as _pipeline_accuracy
from .pipeline import normalized_covariances, train_weighted

_KL_RIDGE = 1e-10
_KL_FLOOR = 1e-12

#: Chance-level accuracy of a balanced binary task.
CHANCE_ACCURACY = 0.5


@dataclass(frozen=True)
class SourceAffinity:
    """Per-source fusion weights, proportional to inverse KL divergence."""

    alpha: np.ndarray
    kl: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=np.float64)
        k = np.asarray(self.kl, dtype=np.float64)
        if a.ndim != 1 or a.shape != k.shape:
            raise DimensionError("alpha and kl must be 1-D with equal length")
        if np.any(a < 0.0):
            raise ConfigError("affinities must be nonnegative")
        if abs(a.sum() - 1.0) > 1e-12:
            raise ConfigError(f"affinities must sum to 1, got {a.sum()!r}")
        object.__setattr__(self, "alpha", _freeze(a))
        object.__setattr__(self, "kl", _freeze(k))


def _ridged_cholesky(sigma: SpatialCovariance):
    m = sigma.matrix
    c = m.shape[0]
    eps = _KL_RIDGE * np.trace(m) / c
    try:
        return np.linalg.cholesky(m + eps * np.eye(c))
    except np.linalg.LinAlgError as exc:
        raise ConditioningError("covariance is not positive definite") from exc


def kl_divergence_gaussian(
    sigma_s: SpatialCovariance, sigma_t: SpatialCovariance
) -> float:
    """KL divergence between zero-mean Gaussians N(0, sigma_s) and N(0, sigma_t).

    Computed as ``0.5 * (log(det(sigma_t) / det(sigma_s))
    + trace(inv(sigma_t) @ sigma_s) - C)`` via Cholesky factors.
    """
    if sigma_s.matrix.shape != sigma_t.matrix.shape:
        raise DimensionError("covariances must have identical shape")
    c = sigma_s.matrix.shape[0]
    chol_s = _ridged_cholesky(sigma_s)
    chol_t = _ridged_cholesky(sigma_t)
    logdet_s = 2.0 * np.sum(np.log(np.diag(chol_s)))
    logdet_t = 2.0 * np.sum(np.log(np.diag(chol_t)))
    half = np.linalg.solve(chol_t, chol_s)
    trace_term = float(np.sum(half * half))
    return 0.5 * (logdet_t - logdet_s + trace_term - c)


def cm1_affinities(
    source_pooled: Sequence[SpatialCovariance], target_pooled: SpatialCovariance
) -> SourceAffinity:
    """Inverse-KL weights over source subjects, normalized to sum to 1.

    Zero divergences (identical distributions) are clamped to a small floor
    so the weights stay finite.
    """
    if not source_pooled:
        raise ConfigError("need at least one source subject")
    kl = np.array(
        [kl_divergence_gaussian(s, target_pooled) for s in source_pooled]
    )
    inv = 1.0 / np.maximum(kl, _KL_FLOOR)
    total = inv.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise AffinityError("cannot normalize source affinities")
    return SourceAffinity(inv / total, kl)


def _combine(
    sigma_t_class: SpatialCovariance,
    source_class: Sequence[SpatialCovariance],
    coeffs: np.ndarray,
    lam: float,
) -> SpatialCovariance:
    c = sigma_t_class.matrix.shape[0]
    for s in source_class:
        if s.matrix.shape != (c, c):
            raise DimensionError("source covariance dimension mismatch")
    fused = (1.0 - lam) * sigma_t_class.matrix
    for coeff, s in zip(coeffs, source_class):
        fused = fused + lam * coeff * s.matrix
    normalized = sigma_t_class.normalized and all(s.normalized for s in source_class)
    return SpatialCovariance(fused, normalized=normalized and abs(np.trace(fused) - 1.0) <= 1e-12)


def cm1_combine(
    sigma_t_class: SpatialCovariance,
    sigma_s_class: Sequence[SpatialCovariance],
    affinity: SourceAffinity,
    lam: float = 0.5,
) -> SpatialCovariance:
    """Affinity-weighted covariance blend, applied once per class."""
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"lambda must be in [0, 1], got {lam}")
    if len(sigma_s_class) != affinity.alpha.shape[0]:
        raise DimensionError("one affinity per source covariance required")
    return _combine(sigma_t_class, sigma_s_class, affinity.alpha, lam)


def cm2_combine(
    sigma_t_class: SpatialCovariance,
    selected_sigma_class: Sequence[SpatialCovariance],
    lam: float,
) -> SpatialCovariance:
    """Unweighted average of selected source covariances blended with the target."""
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"lambda must be in [0, 1], got {lam}")
    if not selected_sigma_class:
        raise ConfigError("selected source set must be nonempty")
    coeffs = np.full(len(selected_sigma_class), 1.0 / len(selected_sigma_class))
    return _combine(sigma_t_class, selected_sigma_class, coeffs, lam)


def cm2_lambda(target_acc: float, selected_acc: float, rand_acc: float = CHANCE_ACCURACY) -> float:
    """Blend factor from validation accuracies; first matching case wins.

    ``target_acc <= rand_acc`` gives 1 (the target-only classifier is no
    better than chance); ``target_acc >= selected_acc`` gives 0 (source
    subjects add nothing); otherwise the normalized accuracy gap.
    """
    for name, value in (("target_acc", target_acc), ("selected_acc", selected_acc), ("rand_acc", rand_acc)):
        if not 0.0 <= value <= 1.0:
            raise ConfigError(f"{name} must be in [0, 1], got {value}")
    if rand_acc >= 1.0:
        raise ConfigError("rand_acc must be below 1")
    if target_acc <= rand_acc:
        return 1.0
    if target_acc >= selected_acc:
        return 0.0
    return (selected_acc - target_acc) / (1.0 - rand_acc)


def cm2_select_subjects(
    target_labeled: SubjectDataset,
    sources: Sequence[SubjectDataset],
    filters_per_class: int,
    precomputed_covs: Sequence[np.ndarray] | None = None,
) -> list[int]:
    """Greedy forward selection of source subjects.

    Starting empty, repeatedly add the source whose inclusion maximizes the
    accuracy on the target's labeled epochs of a CSP+LDA model trained on
    the union of the selected sources' epochs. Stops when no addition
    improves the accuracy; ties break toward the lowest subject index. The
    result is never empty: the best single subject is kept even if it does
    not beat chance.

    ``precomputed_covs`` may pass per-source normalized covariance stacks to
    avoid recomputation across repeated selections.
    """
    if not sources:
        raise ConfigError("need at least one source subject")
    target_data = target_labeled.data
    target_labels = target_labeled.labels

    stacks = [s.data for s in sources]
    labels = [s.labels for s in sources]
    if precomputed_covs is None:
        covs = [normalized_covariances(s) for s in stacks]
    else:
        if len(precomputed_covs) != len(sources):
            raise DimensionError("one covariance stack per source required")
        covs = list(precomputed_covs)

    selected: list[int] = []
    best_acc = -np.inf
    remaining = list(range(len(sources)))
    while remaining:
        round_best_idx = -1
        round_best_acc = best_acc
        for z in remaining:
            subset = sorted(selected + [z])
            data = np.concatenate([stacks[i] for i in subset])
            labs = np.concatenate([labels[i] for i in subset])
            cov = np.concatenate([covs[i] for i in subset])
            bank, model = train_weighted(
                data, labs, np.ones(len(labs)), filters_per_class, cov_stack=cov
            )
            acc = _pipeline_accuracy(bank, model, target_data, target_labels)
            if acc > round_best_acc:
                round_best_acc = acc
                round_best_idx = z
        if round_best_idx < 0:
            break
        selected.append(round_best_idx)
        remaining.remove(round_best_idx)
        best_acc = round_best_acc
    return sorted(selected)
