import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from safetycage.explain import linear_shap, linear_shap_batch, median_reduce, reduced_shap
from safetycage.linmodel import RidgeModel, ridge_fit


def model(B, mu, b0=None):
    B = np.asarray(B, dtype=float)
    return RidgeModel(1.0, B, np.zeros(B.shape[1]) if b0 is None else np.asarray(b0, float),
                      np.asarray(mu, float))


def test_listed_example():
    m = model([[2.0], [-1.0]], [1.0, 2.0], [0.3])
    phi = linear_shap(m, [3.0, 4.0])
    np.testing.assert_array_equal(phi, [[4.0, -2.0]])
    diff = m.predict([[3.0, 4.0]]) - m.predict([[1.0, 2.0]])
    assert phi.sum() == pytest.approx(diff[0, 0], abs=1e-15) == 2.0


def test_zero_at_mean_and_linearity(rng):
    B = rng.normal(size=(4, 3))
    mu = rng.normal(size=4)
    assert np.all(linear_shap(model(B, mu), mu) == 0)
    x = rng.normal(size=4)
    np.testing.assert_array_equal(linear_shap(model(2 * B, mu), x), 2 * linear_shap(model(B, mu), x))


def test_median_examples():
    assert np.array_equal(median_reduce([[1.0, 5.0]]), [1.0, 5.0])
    assert median_reduce(np.array([[1.0], [2.0], [9.0]]))[0] == 2.0
    assert median_reduce(np.array([[1.0], [2.0], [3.0], [10.0]]))[0] == 2.5


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 9), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_reduced_shap_matches_explicit(m, d, seed):
    rng = np.random.default_rng(seed)
    mod = model(rng.normal(size=(d, m)), rng.normal(size=d))
    X = rng.normal(size=(7, d))
    explicit = np.array([median_reduce(linear_shap(mod, x)) for x in X])
    np.testing.assert_allclose(reduced_shap(mod, X), explicit, rtol=0, atol=1e-15)
    perm = rng.permutation(m)
    permuted = model(mod.coefficients[:, perm], mod.feature_means)
    np.testing.assert_array_equal(reduced_shap(permuted, X), reduced_shap(mod, X))


def test_zero_coefficient_feature(rng):
    B = rng.normal(size=(3, 5))
    B[1] = 0.0
    out = reduced_shap(model(B, np.zeros(3)), rng.normal(size=(4, 3)))
    assert np.all(out[:, 1] == 0.0)


def test_batch_matches_single(rng):
    m = ridge_fit(rng.normal(size=(20, 4)), rng.normal(size=(20, 3)))
    X = rng.normal(size=(5, 4))
    batch = linear_shap_batch(m, X)
    for i in range(5):
        np.testing.assert_array_equal(batch[i], linear_shap(m, X[i]))
    with pytest.raises(ValueError):
        linear_shap(m, np.ones(3))
