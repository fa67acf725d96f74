"""Binary linear discriminant analysis over feature vectors.

Fisher LDA with a ridge-regularized pooled covariance:

    w = inv(S_pooled) @ (mu1 - mu0)
    bias = -w @ (mu0 + mu1) / 2

Sample weights enter the class means and the pooled scatter, so training
with integer weights equals training on a replicated dataset. Scores above
zero classify as class 1; exact ties classify as class 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .data import _freeze
from .errors import (
    ConfigError,
    DimensionError,
    EmptyClassError,
    InsufficientDataError,
)

#: Relative ridge added to the pooled covariance; with only a couple of
#: samples per class the pooled estimate is singular.
POOLED_RIDGE = 1e-6


@dataclass(frozen=True)
class LdaModel:
    weights: np.ndarray
    bias: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1:
            raise DimensionError("weight vector must be 1-D")
        if not np.all(np.isfinite(w)) or not np.isfinite(self.bias):
            raise ConfigError("model parameters must be finite")
        if not np.any(w != 0.0):
            raise ConfigError("weight vector must not be all-zero")
        object.__setattr__(self, "weights", _freeze(w))
        object.__setattr__(self, "bias", float(self.bias))


def _as_feature_array(features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"features must be (N, D), got shape {x.shape}")
    return x


def lda_train(
    features,
    labels: Sequence[int],
    weights: Sequence[float] | None = None,
) -> LdaModel:
    """Fit the classifier from (N, D) features and {0,1} labels.

    Optional nonnegative per-sample weights; each class needs positive
    total weight.
    """
    x = _as_feature_array(features)
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (x.shape[0],):
        raise DimensionError("one label per sample required")
    if not np.all((y == 0) | (y == 1)):
        raise ConfigError("labels must be 0 or 1")
    if weights is None:
        w = np.ones(x.shape[0])
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (x.shape[0],):
            raise DimensionError("one weight per sample required")
        if np.any(w < 0.0):
            raise ConfigError("weights must be nonnegative")

    mu0, mu1, scatter, w0, w1 = kernels.weighted_lda_stats(x, y, w)
    if w0 <= 0.0 or w1 <= 0.0:
        raise EmptyClassError("each class needs positive total weight")
    pooled = scatter / (w0 + w1)
    d = x.shape[1]
    # With one sample per class the scatter is exactly zero; fall back to an
    # absolute ridge so the model degrades to a nearest-class-mean direction.
    tr = np.trace(pooled)
    ridge = POOLED_RIDGE * (tr / d) if tr > 0.0 else POOLED_RIDGE
    pooled = pooled + ridge * np.eye(d)
    coef = np.linalg.solve(pooled, mu1 - mu0)
    bias = -float(coef @ (mu0 + mu1)) / 2.0
    return LdaModel(coef, bias)


def lda_score(model: LdaModel, features) -> np.ndarray:
    """Decision scores for one (D,) vector or an (N, D) matrix."""
    x = np.asarray(features, dtype=np.float64)
    if x.shape[-1] != model.weights.shape[0]:
        raise DimensionError(
            f"feature dimension {x.shape[-1]} does not match model "
            f"dimension {model.weights.shape[0]}"
        )
    return x @ model.weights + model.bias


def lda_predict(model: LdaModel, feature) -> tuple[int, float]:
    """Label and score of a single feature vector; ties go to class 0."""
    x = np.asarray(feature, dtype=np.float64)
    if x.shape != model.weights.shape:
        raise DimensionError(
            f"feature shape {x.shape} does not match model dimension "
            f"{model.weights.shape}"
        )
    score = float(x @ model.weights + model.bias)
    return (1 if score > 0.0 else 0), score


def loo_accuracy(features, labels: Sequence[int]) -> float:
    """Leave-one-out accuracy of the classifier over the given features.

    Needs at least two samples per class so every fold can train.
    """
    x = _as_feature_array(features)
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (x.shape[0],):
        raise DimensionError("one label per sample required")
    n0 = int(np.sum(y == 0))
    n1 = int(np.sum(y == 1))
    if n0 < 2 or n1 < 2:
        raise InsufficientDataError(
            f"leave-one-out needs >= 2 samples per class, got {n0} and {n1}"
        )
    correct = 0
    idx = np.arange(len(y))
    for k in range(len(y)):
        keep = idx != k
        model = lda_train(x[keep], y[keep])
        label, _ = lda_predict(model, x[k])
        correct += int(label == y[k])
    return correct / len(y)
