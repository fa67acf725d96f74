import numpy as np
import pytest
from oracles import lda_cramer_2d

from csptl import (
    DimensionError,
    EmptyClassError,
    InsufficientDataError,
    LdaModel,
    lda_predict,
    lda_train,
    loo_accuracy,
)


def _symmetric_dataset():
    # class means (-1, 0) and (1, 0) with isotropic pooled covariance
    x0 = np.array([[-2.0, 0.0], [0.0, 0.0], [-1.0, 1.0], [-1.0, -1.0]])
    x1 = x0 + np.array([2.0, 0.0])
    features = np.vstack([x0, x1])
    labels = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    return features, labels


class TestTrain:
    def test_symmetric_means_boundary(self):
        features, labels = _symmetric_dataset()
        model = lda_train(features, labels)
        # boundary is x1 = 0: weight on the second coordinate vanishes
        assert abs(model.weights[1]) <= 1e-12
        assert abs(model.bias) <= 1e-12
        assert lda_predict(model, np.array([2.0, 0.0]))[0] == 1

    def test_duplication_equivalence(self, rng):
        x = rng.standard_normal((10, 3))
        y = rng.integers(0, 2, size=10)
        y[:2] = [0, 1]
        base = lda_train(x, y)
        doubled = lda_train(np.vstack([x, x]), np.concatenate([y, y]))
        assert np.allclose(base.weights, doubled.weights, atol=1e-12)
        assert abs(base.bias - doubled.bias) <= 1e-12

    def test_against_cramer_oracle(self, rng):
        for _ in range(5):
            x = np.vstack(
                [
                    rng.multivariate_normal([-1, 0.5], [[1, 0.3], [0.3, 2]], 12),
                    rng.multivariate_normal([1, -0.5], [[1, 0.3], [0.3, 2]], 12),
                ]
            )
            y = np.repeat([0, 1], 12)
            w = rng.uniform(0.1, 2.0, size=24)
            model = lda_train(x, y, weights=w)
            ref_w, ref_b = lda_cramer_2d(x, y, w)
            assert np.allclose(model.weights, ref_w, atol=1e-12)
            assert abs(model.bias - ref_b) <= 1e-12

    def test_single_class_fails(self):
        with pytest.raises(EmptyClassError):
            lda_train(np.ones((3, 2)), [0, 0, 0])

    def test_zero_weight_class_fails(self):
        with pytest.raises(EmptyClassError):
            lda_train(np.eye(2), [0, 1], weights=[1.0, 0.0])

    def test_order_invariance(self, rng):
        x = rng.standard_normal((12, 4))
        y = np.array([0, 1] * 6)
        perm = rng.permutation(12)
        a = lda_train(x, y)
        b = lda_train(x[perm], y[perm])
        assert np.allclose(a.weights, b.weights, atol=1e-12)
        assert abs(a.bias - b.bias) <= 1e-12

    def test_affine_shift_changes_bias_only(self, rng):
        x = rng.standard_normal((14, 3))
        y = np.array([0, 1] * 7)
        shift = np.array([5.0, -2.0, 0.5])
        a = lda_train(x, y)
        b = lda_train(x + shift, y)
        assert np.allclose(a.weights, b.weights, atol=1e-10)
        for xi in x:
            assert lda_predict(a, xi)[0] == lda_predict(b, xi + shift)[0]

    def test_integer_weights_equal_replication(self, rng):
        x = rng.standard_normal((8, 2))
        y = np.array([0, 1] * 4)
        counts = rng.integers(1, 4, size=8)
        weighted = lda_train(x, y, weights=counts.astype(float))
        replicated = lda_train(
            np.repeat(x, counts, axis=0), np.repeat(y, counts)
        )
        assert np.allclose(weighted.weights, replicated.weights, atol=1e-10)
        assert abs(weighted.bias - replicated.bias) <= 1e-10


class TestPredict:
    def test_exact_tie_is_class_zero(self):
        model = LdaModel(np.array([1.0, 0.0]), 0.0)
        label, score = lda_predict(model, np.array([0.0, 3.0]))
        assert score == 0.0
        assert label == 0

    def test_dot_product_example(self):
        model = LdaModel(np.array([1.0, 0.0]), 0.0)
        label, score = lda_predict(model, np.array([-3.0, 7.0]))
        assert score == -3.0
        assert label == 0

    def test_negation_flips_non_ties(self, rng):
        model = LdaModel(np.array([0.7, -1.2]), 0.3)
        flipped = LdaModel(-model.weights, -model.bias)
        for _ in range(20):
            x = rng.standard_normal(2)
            label, score = lda_predict(model, x)
            if score != 0.0:
                assert lda_predict(flipped, x)[0] == 1 - label

    def test_dimension_mismatch(self):
        model = LdaModel(np.array([1.0, 0.0]), 0.0)
        with pytest.raises(DimensionError):
            lda_predict(model, np.array([1.0, 2.0, 3.0]))


class TestLooAccuracy:
    def test_separable_classes(self, rng):
        x = np.vstack(
            [rng.standard_normal((6, 2)) - 10.0, rng.standard_normal((6, 2)) + 10.0]
        )
        y = np.repeat([0, 1], 6)
        assert loo_accuracy(x, y) == 1.0

    def test_range_on_uninformative_features(self, rng):
        x = np.ones((8, 2)) + rng.standard_normal((8, 2)) * 1e-9
        y = np.array([0, 1] * 4)
        acc = loo_accuracy(x, y)
        assert 0.0 <= acc <= 1.0

    def test_matches_manual_folds(self, rng):
        x = rng.standard_normal((4, 2)) + np.array([[0], [0], [3], [3]])
        y = np.array([0, 0, 1, 1])
        correct = 0
        for k in range(4):
            keep = np.arange(4) != k
            ref_w, ref_b = lda_cramer_2d(x[keep], y[keep])
            pred = 1 if x[k] @ ref_w + ref_b > 0 else 0
            correct += int(pred == y[k])
        assert loo_accuracy(x, y) == correct / 4

    def test_insufficient_data(self):
        with pytest.raises(InsufficientDataError):
            loo_accuracy(np.eye(3), [0, 0, 1])
