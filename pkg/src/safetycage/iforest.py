"""Isolation Forest anomaly scores.

Trees are stored as flat node arrays, one row per tree, so that fitting
and scoring can run in the compiled kernels. Random draws are made up
front in numpy from a per-tree stream seeded by ``(seed, tree_index)``;
the kernels themselves are deterministic, so both backends build the
same trees and return the same scores.

Scores follow the usual convention: ``s = 2 ** (-E[h(x)] / c(psi))`` lies
in (0, 1) with larger meaning more anomalous, and the decision score
``-s - offset`` with ``offset = -0.5`` is positive for inliers and
negative for outliers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._backend import get_kernels
from .persist import load_arrays, save_arrays

EULER_GAMMA = 0.5772156649
DEFAULT_TREES = 100
DEFAULT_MAX_SAMPLES = 256
DEFAULT_OFFSET = -0.5


def avg_path_length_c(n) -> float:
    """Average path length of an unsuccessful BST search over ``n`` points."""
    if n <= 1:
        return 0.0
    if n == 2:
        return 1.0
    return 2.0 * (math.log(n - 1) + EULER_GAMMA) - 2.0 * (n - 1) / n


@dataclass(frozen=True)
class IsolationTree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray
    depth: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(np.count_nonzero(self.size))

    def leaves(self) -> np.ndarray:
        return np.flatnonzero((self.feature < 0) & (self.size > 0))

    def leaf_for(self, x) -> int:
        node = 0
        while self.feature[node] >= 0:
            if x[self.feature[node]] < self.threshold[node]:
                node = self.left[node]
            else:
                node = self.right[node]
        return int(node)


def path_length(tree: IsolationTree, x) -> float:
    """Depth of the leaf reached by ``x`` plus ``c(leaf size)``."""
    leaf = tree.leaf_for(np.asarray(x, dtype=np.float64))
    return float(tree.depth[leaf]) + avg_path_length_c(int(tree.size[leaf]))


@dataclass(frozen=True)
class IsolationForestModel:
    n_trees: int
    subsample_size: int
    dim: int
    seed: int
    feature: np.ndarray  # (trees, max_nodes)
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray
    depth: np.ndarray
    leaf_value: np.ndarray  # depth + c(size) at leaves
    offset: float = DEFAULT_OFFSET

    @property
    def max_depth(self) -> int:
        return max_depth_for(self.subsample_size)

    def tree(self, i: int) -> IsolationTree:
        return IsolationTree(self.feature[i], self.threshold[i], self.left[i], self.right[i],
                             self.size[i], self.depth[i])

    def _check(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(f"expected rows of length {self.dim}, got shape {X.shape}")
        return X

    def mean_path_length(self, X, backend: str | None = None) -> np.ndarray:
        X = self._check(X)
        sums = get_kernels(backend).forest_path_sums(
            X, self.feature, self.threshold, self.left, self.right, self.leaf_value)
        return sums / self.n_trees

    def score_samples(self, X, backend: str | None = None) -> np.ndarray:
        """Isolation score ``s`` in (0, 1); larger is more anomalous."""
        return score_from_path_length(self.mean_path_length(X, backend), self.subsample_size)

    def decision_function(self, X, backend: str | None = None) -> np.ndarray:
        return -self.score_samples(X, backend) - self.offset

    def save(self, path):
        params = {"n_trees": self.n_trees, "subsample_size": self.subsample_size,
                  "dim": self.dim, "seed": self.seed, "offset": self.offset}
        arrays = {name: getattr(self, name) for name in
                  ("feature", "threshold", "left", "right", "size", "depth", "leaf_value")}
        return save_arrays(path, "isolation_forest", params, arrays)

    @classmethod
    def load(cls, path) -> IsolationForestModel:
        p, a = load_arrays(path, "isolation_forest")
        return cls(p["n_trees"], p["subsample_size"], p["dim"], p["seed"], a["feature"],
                   a["threshold"], a["left"], a["right"], a["size"], a["depth"],
                   a["leaf_value"], p["offset"])


def max_depth_for(psi: int) -> int:
    return int(math.ceil(math.log2(psi)))


def score_from_path_length(mean_path, psi: int):
    return 2.0 ** (-np.asarray(mean_path) / avg_path_length_c(psi))


def _leaf_values(size: np.ndarray, depth: np.ndarray, feature: np.ndarray) -> np.ndarray:
    out = np.zeros(size.shape)
    leaf = (feature < 0) & (size > 0)
    for idx in zip(*np.nonzero(leaf)):
        out[idx] = depth[idx] + avg_path_length_c(int(size[idx]))
    return out


def iforest_fit(X, n_trees: int = DEFAULT_TREES, psi: int | None = None, seed: int = 0,
                backend: str | None = None) -> IsolationForestModel:
    """Fit ``n_trees`` isolation trees on without-replacement subsamples.

    ``psi`` defaults to ``min(256, n)``. Splits choose uniformly among the
    features that are not constant in the node, with a uniform threshold
    between that feature's node minimum and maximum.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    n, d = X.shape
    if n < 2:
        raise ValueError("need at least two samples")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if psi is None:
        psi = min(DEFAULT_MAX_SAMPLES, n)
    if not 2 <= psi <= n:
        raise ValueError(f"psi must lie in [2, {n}], got {psi}")
    if seed < 0:
        raise ValueError("seed must be non-negative")

    kernels = get_kernels(backend)
    max_depth = max_depth_for(psi)
    m = 2 * psi - 1
    arrays = {name: np.empty((n_trees, m), dtype=np.int64)
              for name in ("feature", "left", "right", "size", "depth")}
    threshold = np.empty((n_trees, m))
    for t in range(n_trees):
        rng = np.random.default_rng(np.random.SeedSequence([seed, t]))
        sub = rng.choice(n, size=psi, replace=False).astype(np.int64)
        uniforms = rng.random(2 * (psi - 1))
        feat, thr, lft, rgt, size, depth, _ = kernels.build_tree(X, sub, uniforms, max_depth)
        arrays["feature"][t] = feat
        arrays["left"][t] = lft
        arrays["right"][t] = rgt
        arrays["size"][t] = size
        arrays["depth"][t] = depth
        threshold[t] = thr
    leaf_value = _leaf_values(arrays["size"], arrays["depth"], arrays["feature"])
    return IsolationForestModel(n_trees, psi, d, seed, arrays["feature"], threshold,
                                arrays["left"], arrays["right"], arrays["size"],
                                arrays["depth"], leaf_value)


def anomaly_score_s(model: IsolationForestModel, x) -> np.ndarray | float:
    out = model.score_samples(x)
    return float(out[0]) if np.ndim(x) == 1 else out


def decision_score(model: IsolationForestModel, x) -> np.ndarray | float:
    out = model.decision_function(x)
    return float(out[0]) if np.ndim(x) == 1 else out
