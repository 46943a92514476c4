"""Linear SHAP values for the ridge predictor.

With interventional perturbation the attribution of feature ``i`` to
output ``o`` is ``B[i, o] * (x[i] - mu[i])``, where ``mu`` are the
training-set feature means stored on the model.
"""
from __future__ import annotations

import numpy as np

from .linmodel import RidgeModel


def linear_shap(model: RidgeModel, x) -> np.ndarray:
    """(outputs, features) attribution matrix for one sample."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != model.feature_means.shape:
        raise ValueError(f"expected {model.feature_means.shape[0]} features, got {x.shape}")
    return model.coefficients.T * (x - model.feature_means)


def linear_shap_batch(model: RidgeModel, X) -> np.ndarray:
    """(samples, outputs, features) attributions."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.feature_means.shape[0]:
        raise ValueError(f"expected rows of length {model.feature_means.shape[0]}")
    return model.coefficients.T[None, :, :] * (X - model.feature_means)[:, None, :]


def median_reduce(shap) -> np.ndarray:
    """Per-feature median over outputs (midpoint of the central pair if even)."""
    shap = np.asarray(shap, dtype=np.float64)
    if shap.shape[-2] < 1:
        raise ValueError("need at least one output")
    return np.median(shap, axis=-2)


def reduced_shap(model: RidgeModel, X, chunk: int = 256) -> np.ndarray:
    """``median_reduce(linear_shap(model, x))`` for every row of ``X``.

    For an odd number of outputs the median commutes with scaling by
    ``x[i] - mu[i]`` (a positive factor keeps the order, a negative one
    reverses it, and the middle element stays in the middle), so the
    result equals ``(x - mu) * median_o(B[i, o])`` exactly. Even output
    counts fall back to the explicit tensor, processed in chunks.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.feature_means.shape[0]:
        raise ValueError(f"expected rows of length {model.feature_means.shape[0]}")
    n_outputs = model.coefficients.shape[1]
    if n_outputs % 2 == 1:
        return (X - model.feature_means) * _middle(model.coefficients)
    parts = [median_reduce(linear_shap_batch(model, X[i:i + chunk]))
             for i in range(0, X.shape[0], chunk)]
    return np.vstack(parts) if parts else np.empty((0, X.shape[1]))


def _middle(B: np.ndarray) -> np.ndarray:
    m = B.shape[1]
    return np.partition(B, m // 2, axis=1)[:, m // 2]
