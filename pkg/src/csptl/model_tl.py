"""Model-based transfer learning: an ensemble of per-source CSP+LDA models.

Each source subject gets its own filter bank and classifier. Their hard
predictions (coded -1/+1) on the target's labeled epochs form a prediction
matrix P, and simplex-constrained ensemble weights minimize the squared
loss ``sum_j (P[j] @ w - y_j)**2`` with ``sum(w) = 1`` and ``w >= 0``,
solved by projected gradient descent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .csp import CspFilterBank, feature_matrix
from .data import Epoch, LabeledEpoch, SubjectDataset, _freeze
from .errors import ConfigError, DimensionError
from .lda import LdaModel, lda_score
from .pipeline import train_weighted

MAX_ITER = 5000
STOP_TOL = 1e-12


@dataclass(frozen=True)
class SourceModelBank:
    """One (filter bank, classifier) pair per source subject."""

    banks: tuple[CspFilterBank, ...]
    models: tuple[LdaModel, ...]
    subject_ids: tuple[str, ...]

    def __post_init__(self):
        if not self.banks:
            raise ConfigError("need at least one source model")
        if not len(self.banks) == len(self.models) == len(self.subject_ids):
            raise DimensionError("banks, models and ids must align")
        c = self.banks[0].channels
        for b in self.banks:
            if b.channels != c:
                raise DimensionError("all source banks must share the channel count")

    @property
    def size(self) -> int:
        return len(self.banks)

    @property
    def channels(self) -> int:
        return self.banks[0].channels


@dataclass(frozen=True)
class EnsembleWeights:
    w: np.ndarray
    objective: float
    converged: bool
    iterations: int

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim != 1:
            raise DimensionError("weights must be 1-D")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ConfigError(f"ensemble weights must sum to 1, got {w.sum()!r}")
        if np.any(w < -1e-12):
            raise ConfigError("ensemble weights must be nonnegative")
        object.__setattr__(self, "w", _freeze(np.maximum(w, 0.0)))


def train_source_models(
    sources: Sequence[SubjectDataset], filters_per_class: int
) -> SourceModelBank:
    """Train an independent CSP+LDA pipeline on each source subject."""
    banks, models, ids = [], [], []
    for source in sources:
        try:
            bank, model = train_weighted(
                source.data,
                source.labels,
                np.ones(len(source)),
                filters_per_class,
            )
        except ConfigError as exc:
            raise type(exc)(f"source {source.subject_id!r}: {exc}") from exc
        banks.append(bank)
        models.append(model)
        ids.append(source.subject_id)
    return SourceModelBank(tuple(banks), tuple(models), tuple(ids))


def _sign_matrix(bank: SourceModelBank, data: np.ndarray) -> np.ndarray:
    """(N, Z) matrix of hard predictions coded -1/+1."""
    if data.shape[1] != bank.channels:
        raise DimensionError(
            f"epochs have {data.shape[1]} channels, bank expects {bank.channels}"
        )
    cols = []
    for b, m in zip(bank.banks, bank.models):
        scores = lda_score(m, feature_matrix(b, data))
        cols.append(np.where(scores > 0.0, 1.0, -1.0))
    return np.column_stack(cols)


def prediction_matrix(
    bank: SourceModelBank, epochs: Sequence[LabeledEpoch]
) -> np.ndarray:
    """Hard per-source predictions for each labeled epoch, coded -1/+1."""
    if not epochs:
        raise ConfigError("need at least one epoch")
    data = np.stack([le.epoch.data for le in epochs])
    return _sign_matrix(bank, data)


def optimize_weights(p_matrix, labels_pm) -> EnsembleWeights:
    """Simplex-constrained least squares over ensemble weights.

    Parameters
    ----------
    p_matrix : (m, Z) array
        Per-source predictions coded -1/+1 (any real values are accepted).
    labels_pm : (m,) array
        Targets coded -1/+1.

    Notes
    -----
    Projected gradient descent with step 1 / L, where L is the largest
    eigenvalue of 2 * P.T @ P; stops on objective improvement below 1e-12
    or after 5000 iterations (the best iterate is returned either way,
    with ``converged`` flagging the cap).
    """
    p = np.asarray(p_matrix, dtype=np.float64)
    y = np.asarray(labels_pm, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] < 1:
        raise ConfigError("prediction matrix must be (m, Z) with m >= 1")
    if y.shape != (p.shape[0],):
        raise DimensionError("one label per prediction row required")

    a = p.T @ p
    c = p.T @ y
    const = float(y @ y)
    lip = 2.0 * float(np.linalg.eigvalsh(a)[-1])
    if lip <= 0.0:
        z = p.shape[1]
        return EnsembleWeights(np.full(z, 1.0 / z), const, True, 0)
    w, objective, _, n_iter = kernels.simplex_pgd(
        a, c, const, 1.0 / lip, MAX_ITER, STOP_TOL
    )
    return EnsembleWeights(w, float(objective), n_iter < MAX_ITER, n_iter)


def uniform_weights(size: int) -> EnsembleWeights:
    """Fallback ensemble weights when no target epochs exist to optimize on."""
    if size < 1:
        raise ConfigError("need at least one source model")
    return EnsembleWeights(np.full(size, 1.0 / size), float("nan"), True, 0)


def ensemble_predict(
    bank: SourceModelBank, weights: EnsembleWeights, epoch: Epoch
) -> tuple[int, float]:
    """Weighted vote of the source models; score ties go to class 0."""
    if weights.w.shape[0] != bank.size:
        raise DimensionError(
            f"{weights.w.shape[0]} weights for {bank.size} source models"
        )
    signs = _sign_matrix(bank, epoch.data[None, :, :])[0]
    score = float(signs @ weights.w)
    return (1 if score > 0.0 else 0), score
