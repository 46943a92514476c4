import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import subspace_angles

from safetycage.linmodel import (
    PcaModel,
    RidgeModel,
    Standardizer,
    fit_standardizer,
    pca_fit,
    pca_transform,
    ridge_fit,
    ridge_predict,
    standardize,
)


class TestStandardizer:
    def test_hand_example(self):
        s = fit_standardizer([[1.0], [3.0]])
        assert s.means[0] == 2.0 and s.scales[0] == 1.0
        np.testing.assert_array_equal(standardize(s, [[1.0], [3.0]]).ravel(), [-1.0, 1.0])

    def test_constant_column(self):
        X = np.array([[0.1, 5.0], [0.1, 6.0], [0.1, 9.0]])
        s = fit_standardizer(X)
        assert s.scales[0] == 1.0
        assert np.all(s.transform(X)[:, 0] == 0.0)

    def test_errors(self):
        with pytest.raises(ValueError):
            fit_standardizer(np.empty((0, 3)))
        with pytest.raises(ValueError):
            fit_standardizer([[1.0, 2.0]])

    @settings(max_examples=40)
    @given(st.integers(2, 30), st.integers(1, 8), st.integers(0, 2**32 - 1))
    def test_round_trip(self, n, d, seed):
        X = np.random.default_rng(seed).normal(size=(n, d)) * 100
        s = fit_standardizer(X)
        np.testing.assert_allclose(s.inverse_transform(s.transform(X)), X, atol=1e-12 * 100, rtol=1e-12)


class TestRidge:
    def test_scalar_example(self):
        m = ridge_fit([[-1.0], [1.0]], [-1.0, 1.0], alpha=1.0)
        assert m.coefficients[0, 0] == pytest.approx(2 / 3, abs=1e-15)
        assert m.intercepts[0] == pytest.approx(0.0, abs=1e-15)
        assert ridge_predict(m, [[1.0]])[0, 0] == pytest.approx(2 / 3, abs=1e-15)

    def test_zero_targets(self, rng):
        m = ridge_fit(rng.normal(size=(20, 4)), np.zeros((20, 3)), 1.0)
        assert np.all(m.coefficients == 0) and np.all(m.intercepts == 0)
        np.testing.assert_array_equal(m.predict(rng.normal(size=(5, 4))), np.zeros((5, 3)))

    def test_huge_alpha(self, rng):
        Y = rng.normal(size=(30, 2))
        m = ridge_fit(rng.normal(size=(30, 5)), Y, 1e12)
        assert np.max(np.abs(m.coefficients)) < 1e-6
        np.testing.assert_allclose(m.intercepts, Y.mean(axis=0), atol=1e-6)

    def test_predict_at_mean(self, rng):
        X = rng.normal(size=(40, 6))
        Y = rng.normal(size=(40, 3))
        m = ridge_fit(X, Y, 0.5)
        np.testing.assert_allclose(m.predict(X.mean(axis=0)[None])[0], Y.mean(axis=0), atol=1e-12)

    def test_matches_augmented_lstsq_oracle(self, rng):
        # ridge = least squares on [Xc; sqrt(alpha) I] against [Yc; 0]
        X = rng.normal(size=(50, 8))
        Y = rng.normal(size=(50, 3))
        alpha = 2.5
        Xc, Yc = X - X.mean(0), Y - Y.mean(0)
        A = np.vstack([Xc, np.sqrt(alpha) * np.eye(8)])
        b = np.vstack([Yc, np.zeros((8, 3))])
        B, *_ = np.linalg.lstsq(A, b, rcond=None)
        np.testing.assert_allclose(ridge_fit(X, Y, alpha).coefficients, B, atol=1e-10)

    def test_errors(self, rng):
        with pytest.raises(ValueError):
            ridge_fit(rng.normal(size=(5, 2)), rng.normal(size=(4, 1)), 1.0)
        with pytest.raises(ValueError):
            ridge_fit(rng.normal(size=(5, 2)), rng.normal(size=(5, 1)), 0.0)
        m = ridge_fit(rng.normal(size=(5, 2)), rng.normal(size=(5, 1)), 1.0)
        with pytest.raises(ValueError):
            m.predict(np.ones((1, 3)))

    def test_persistence(self, tmp_path, rng):
        m = ridge_fit(rng.normal(size=(10, 3)), rng.normal(size=(10, 2)), 1.0)
        m.save(tmp_path / "ridge")
        back = RidgeModel.load(tmp_path / "ridge")
        for a, b in [(m.coefficients, back.coefficients), (m.intercepts, back.intercepts),
                     (m.feature_means, back.feature_means)]:
            assert np.array_equal(a, b)
        assert back.alpha == m.alpha


class TestPca:
    def test_diagonal_example(self):
        X = np.array([[1.0, 1.0], [-1.0, -1.0], [2.0, 2.0], [-2.0, -2.0]])
        m = pca_fit(X, 1)
        np.testing.assert_allclose(m.components[0], [1 / np.sqrt(2)] * 2, atol=1e-12)
        assert m.explained_variance_ratio[0] == pytest.approx(1.0, abs=1e-12)

    def test_full_rank_preserves_distances(self, rng):
        from scipy.spatial.distance import pdist
        X = rng.normal(size=(30, 5))
        Z = pca_transform(pca_fit(X, 5), X)
        np.testing.assert_allclose(pdist(Z), pdist(X), atol=1e-8)

    def test_svd_oracle(self, rng):
        X = rng.normal(size=(50, 10)) @ rng.normal(size=(10, 10))
        m = pca_fit(X, 3)
        _, sv, vt = np.linalg.svd(X - X.mean(0), full_matrices=False)
        assert np.max(subspace_angles(m.components.T, vt[:3].T)) < 1e-6
        np.testing.assert_allclose(m.explained_variances, sv[:3] ** 2 / 49, rtol=1e-8)

    def test_sign_rule_and_orthonormal(self, rng):
        m = pca_fit(rng.normal(size=(40, 6)), 4)
        np.testing.assert_allclose(m.components @ m.components.T, np.eye(4), atol=1e-12)
        idx = np.argmax(np.abs(m.components), axis=1)
        assert np.all(m.components[np.arange(4), idx] > 0)

    @pytest.mark.parametrize("k", [0, 10, 11])
    def test_bad_k(self, rng, k):
        with pytest.raises(ValueError):
            pca_fit(rng.normal(size=(10, 12)), k)

    def test_persistence(self, tmp_path, rng):
        m = pca_fit(rng.normal(size=(20, 4)), 2)
        m.save(tmp_path / "pca")
        back = PcaModel.load(tmp_path / "pca")
        assert np.array_equal(back.components, m.components)
        assert back.total_variance == m.total_variance


def test_standardizer_persistence(tmp_path, rng):
    s = fit_standardizer(rng.normal(size=(6, 3)))
    s.save(tmp_path / "s")
    back = Standardizer.load(tmp_path / "s")
    assert np.array_equal(back.means, s.means) and np.array_equal(back.scales, s.scales)
