"""Standardisation, multi-output ridge regression and PCA."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .persist import load_arrays, save_arrays


def _as_2d(X, name="X") -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got shape {X.shape}")
    if X.size == 0:
        raise ValueError(f"{name} is empty")
    return X


@dataclass(frozen=True)
class Standardizer:
    means: np.ndarray
    scales: np.ndarray

    def transform(self, X) -> np.ndarray:
        X = _as_2d(X)
        if X.shape[1] != self.means.shape[0]:
            raise ValueError(f"expected {self.means.shape[0]} columns, got {X.shape[1]}")
        return (X - self.means) / self.scales

    def inverse_transform(self, Z) -> np.ndarray:
        return _as_2d(Z) * self.scales + self.means

    def save(self, path):
        return save_arrays(path, "standardizer", {}, {"means": self.means, "scales": self.scales})

    @classmethod
    def load(cls, path) -> Standardizer:
        _, a = load_arrays(path, "standardizer")
        return cls(a["means"], a["scales"])


def fit_standardizer(X) -> Standardizer:
    """Column means and population standard deviations.

    Constant columns get scale 1 and their exact value as mean, so they
    transform to exact zeros.
    """
    X = _as_2d(X)
    if X.shape[0] < 2:
        raise ValueError("need at least two rows to standardise")
    means = X.mean(axis=0)
    scales = X.std(axis=0)
    constant = np.ptp(X, axis=0) == 0
    means[constant] = X[0, constant]
    scales[constant] = 1.0
    scales[scales == 0] = 1.0
    return Standardizer(means, scales)


def standardize(s: Standardizer, X) -> np.ndarray:
    return s.transform(X)


@dataclass(frozen=True)
class RidgeModel:
    alpha: float
    coefficients: np.ndarray  # (d, m)
    intercepts: np.ndarray  # (m,)
    feature_means: np.ndarray  # (d,) training means, the SHAP baseline

    def predict(self, X) -> np.ndarray:
        X = _as_2d(X)
        if X.shape[1] != self.coefficients.shape[0]:
            raise ValueError(f"expected {self.coefficients.shape[0]} features, got {X.shape[1]}")
        return X @ self.coefficients + self.intercepts

    def save(self, path):
        return save_arrays(path, "ridge", {"alpha": self.alpha},
                           {"coefficients": self.coefficients, "intercepts": self.intercepts,
                            "feature_means": self.feature_means})

    @classmethod
    def load(cls, path) -> RidgeModel:
        p, a = load_arrays(path, "ridge")
        return cls(p["alpha"], a["coefficients"], a["intercepts"], a["feature_means"])


def ridge_fit(X, Y, alpha: float = 1.0) -> RidgeModel:
    """Ridge regression with an unpenalised intercept.

    Solves ``(Xc'Xc + alpha I) B = Xc'Yc`` on column-centred data with a
    Cholesky-based symmetric solve. ``Y`` may be 1-D for a single output.
    """
    X = _as_2d(X)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2 or Y.shape[0] != X.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but Y has shape {Y.shape}")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    x_mean = X.mean(axis=0)
    y_mean = Y.mean(axis=0)
    Xc = X - x_mean
    Yc = Y - y_mean
    gram = Xc.T @ Xc
    gram[np.diag_indices_from(gram)] += alpha
    B = linalg.solve(gram, Xc.T @ Yc, assume_a="pos")
    intercepts = y_mean - x_mean @ B
    return RidgeModel(float(alpha), B, intercepts, x_mean)


def ridge_predict(model: RidgeModel, X) -> np.ndarray:
    return model.predict(X)


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (k, d), orthonormal rows
    explained_variances: np.ndarray
    total_variance: float = 1.0

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        return self.explained_variances / self.total_variance

    def transform(self, X) -> np.ndarray:
        X = _as_2d(X)
        if X.shape[1] != self.mean.shape[0]:
            raise ValueError(f"expected {self.mean.shape[0]} columns, got {X.shape[1]}")
        return (X - self.mean) @ self.components.T

    def inverse_transform(self, Z) -> np.ndarray:
        return np.asarray(Z) @ self.components + self.mean

    def save(self, path):
        return save_arrays(path, "pca", {"total_variance": self.total_variance},
                           {"mean": self.mean, "components": self.components,
                            "explained_variances": self.explained_variances})

    @classmethod
    def load(cls, path) -> PcaModel:
        p, a = load_arrays(path, "pca")
        return cls(a["mean"], a["components"], a["explained_variances"], p["total_variance"])


def pca_fit(X, k: int) -> PcaModel:
    """Top-``k`` principal axes from the eigendecomposition of the covariance.

    Each component is oriented so its largest-magnitude entry is positive.
    """
    X = _as_2d(X)
    n, d = X.shape
    if not 1 <= k <= min(n - 1, d):
        raise ValueError(f"k={k} outside [1, {min(n - 1, d)}]")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (n - 1)
    evals, evecs = linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:k]
    evals = np.clip(evals[order], 0.0, None)
    comps = evecs[:, order].T.copy()
    pivot = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(k), pivot])
    signs[signs == 0] = 1.0
    comps *= signs[:, None]
    total = float(np.trace(cov))
    return PcaModel(mean, comps, evals, total if total > 0 else 1.0)


def pca_transform(model: PcaModel, X) -> np.ndarray:
    return model.transform(X)
