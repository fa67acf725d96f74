import numpy as np
import pytest
from oracles import (
    dense_pencil_eigs,
    matmul_triple_loop,
    max_principal_angle,
    spd_pair_with_gaps,
)

from csptl import (
    CspFilterBank,
    DegenerateFeatureError,
    DimensionError,
    Epoch,
    SpatialCovariance,
    apply_filters,
    compute_csp,
    feature_matrix,
    log_variance_features,
)


def _cov(mat, normalized=False):
    return SpatialCovariance(np.asarray(mat, dtype=float), normalized=normalized)


class TestComputeCsp:
    def test_diagonal_pair_analytic(self):
        bank = compute_csp(_cov(np.diag([4.0, 1.0])), _cov(np.diag([1.0, 4.0])), 1)
        # class-0 filter selects channel 1, class-1 filter channel 2
        assert abs(abs(bank.w0[0, 0]) - 1.0) <= 1e-12
        assert abs(bank.w0[1, 0]) <= 1e-6
        assert abs(abs(bank.w1[1, 0]) - 1.0) <= 1e-12
        assert np.allclose(bank.eigenvalues, [4.0, 0.25], atol=1e-8)

    def test_equal_classes_degenerate(self):
        bank = compute_csp(_cov(np.eye(2) / 2, True), _cov(np.eye(2) / 2, True), 1)
        assert np.allclose(bank.eigenvalues, [1.0, 1.0], atol=1e-8)
        # any orthonormal pair is valid
        gram = bank.w_star.T @ bank.w_star
        assert np.allclose(gram, np.eye(2), atol=1e-8)

    def test_against_dense_eigensolve(self, rng):
        for _ in range(10):
            s0, s1 = spd_pair_with_gaps(rng, 6)
            bank = compute_csp(_cov(s0), _cov(s1), 2)
            ref_vals, ref_vecs = dense_pencil_eigs(s0, s1)
            assert np.allclose(bank.eigenvalues[:2], ref_vals[:2], atol=1e-10)
            assert np.allclose(bank.eigenvalues[2:], ref_vals[::-1][:2], atol=1e-10)
            assert max_principal_angle(bank.w0, ref_vecs[:, :2]) <= 1e-8
            assert max_principal_angle(bank.w1, ref_vecs[:, -2:]) <= 1e-8

    def test_simultaneous_diagonalization(self, rng):
        for _ in range(10):
            s0, s1 = spd_pair_with_gaps(rng, 6)
            w = compute_csp(_cov(s0), _cov(s1), 3).w_star
            for s in (s0, s1):
                d = w.T @ s @ w
                off = d - np.diag(np.diag(d))
                assert np.max(np.abs(off)) <= 1e-8 * np.max(np.abs(np.diag(d)))

    def test_eigenvalue_ordering(self, rng):
        for _ in range(10):
            s0, s1 = spd_pair_with_gaps(rng, 8)
            bank = compute_csp(_cov(s0), _cov(s1), 3)
            ev = bank.eigenvalues
            f = bank.filters_per_class
            assert np.all(np.diff(ev[:f]) <= 1e-12)
            assert np.all(np.diff(ev[f:]) >= -1e-12)
            assert ev[:f].min() >= ev[f:].max() - 1e-12

    def test_scale_invariance(self, rng):
        s0, s1 = spd_pair_with_gaps(rng, 6)
        base = compute_csp(_cov(s0), _cov(s1), 2)
        for c in (1e-3, 7.0, 1e4):
            scaled = compute_csp(_cov(c * s0), _cov(c * s1), 2)
            assert max_principal_angle(base.w0, scaled.w0) <= 1e-8
            assert max_principal_angle(base.w1, scaled.w1) <= 1e-8

    def test_unit_norm_and_sign_convention(self, rng):
        s0, s1 = spd_pair_with_gaps(rng, 6)
        w = compute_csp(_cov(s0), _cov(s1), 3).w_star
        assert np.allclose(np.linalg.norm(w, axis=0), 1.0, atol=1e-12)
        peaks = np.abs(w).argmax(axis=0)
        assert np.all(w[peaks, np.arange(w.shape[1])] > 0.0)

    def test_too_many_filters(self):
        with pytest.raises(DimensionError):
            compute_csp(_cov(np.eye(4)), _cov(np.eye(4)), 3)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            compute_csp(_cov(np.eye(4)), _cov(np.eye(3)), 1)


class TestApplyFilters:
    def test_identity_bank(self):
        bank = CspFilterBank(np.eye(2), 1, np.array([1.0, 1.0]))
        x = np.arange(6.0).reshape(2, 3)
        assert np.array_equal(apply_filters(bank, Epoch(x)), x)

    def test_selector_column(self):
        w = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
        bank = CspFilterBank(w, 1, np.array([2.0, 0.5]))
        x = np.arange(12.0).reshape(3, 4)
        out = apply_filters(bank, Epoch(x))
        assert np.array_equal(out[0], x[0])
        assert np.array_equal(out[1], x[2])

    def test_matches_triple_loop_product(self, rng):
        w, _ = np.linalg.qr(rng.standard_normal((3, 2)))
        bank = CspFilterBank(w, 1, np.array([1.0, 1.0]))
        x = rng.standard_normal((3, 5))
        expected = matmul_triple_loop(w.T, x)
        assert np.allclose(apply_filters(bank, Epoch(x)), expected, atol=1e-14)

    def test_channel_mismatch(self):
        bank = CspFilterBank(np.eye(2), 1, np.array([1.0, 1.0]))
        with pytest.raises(DimensionError):
            apply_filters(bank, Epoch(np.ones((3, 4))))


class TestLogVarianceFeatures:
    def test_equal_power_rows(self):
        y = np.array([[1.0, 1.0], [1.0, -1.0]])
        feats = log_variance_features(y)
        assert np.allclose(feats, np.log(0.5), atol=1e-15)

    def test_power_ratio_three_to_one(self):
        y = np.array([[np.sqrt(3.0), 0.0], [1.0, 0.0]])
        assert np.allclose(
            log_variance_features(y), [np.log(0.75), np.log(0.25)], atol=1e-14
        )

    def test_exp_features_sum_to_one(self, rng):
        for _ in range(10):
            y = rng.standard_normal((4, 30))
            feats = log_variance_features(y)
            assert abs(np.exp(feats).sum() - 1.0) <= 1e-12
            assert np.all(feats <= 0.0)

    def test_zero_row_reports_index(self):
        y = np.array([[1.0, 2.0], [0.0, 0.0], [3.0, 1.0]])
        with pytest.raises(DegenerateFeatureError) as exc:
            log_variance_features(y)
        assert exc.value.row == 1

    def test_feature_matrix_agrees_with_single_epoch_path(self, rng):
        s0, s1 = spd_pair_with_gaps(rng, 5)
        bank = compute_csp(_cov(s0), _cov(s1), 2)
        data = rng.standard_normal((7, 5, 20))
        batch = feature_matrix(bank, data)
        for k in range(7):
            single = log_variance_features(apply_filters(bank, Epoch(data[k])))
            assert np.allclose(batch[k], single, atol=1e-12)
