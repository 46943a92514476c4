"""Group k-fold evaluation of the three anomaly-detection setups.

For every fold a ridge predictor is trained on the standardised train
rows, and an isolation forest is trained on a PCA projection of one of
three spaces:

* ``x``       the standardised model inputs,
* ``y_true``  the training targets (validation rows are scored through
              their *predictions*, the only thing available in production),
* ``x_shap``  median-over-outputs linear SHAP vectors of the ridge model.

Every validation row yields one :class:`SampleRecord` holding its
decision score and prediction error. Threshold sweeps over the decision
scores turn these records into coverage/error trade-off curves.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .encode import Encoding
from .explain import reduced_shap
from .iforest import DEFAULT_TREES, IsolationForestModel, iforest_fit
from .linmodel import PcaModel, RidgeModel, Standardizer, fit_standardizer, pca_fit, ridge_fit

DEFAULT_PCA_K = 30
DEFAULT_THRESHOLDS = 201
COVERAGE_GRID = np.linspace(0.0, 1.0, 101)


class SetupKind(str, enum.Enum):
    X = "x"
    Y_TRUE = "y_true"
    X_SHAP = "x_shap"

    @classmethod
    def parse(cls, value) -> SetupKind:
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown setup {value!r}; expected one of {names}") from None


SETUP_ORDER = (SetupKind.X, SetupKind.Y_TRUE, SetupKind.X_SHAP)


@dataclass(frozen=True)
class FoldPlan:
    k: int
    seed: int
    assignments: dict  # group id -> fold index

    def folds_for(self, groups) -> np.ndarray:
        try:
            return np.array([self.assignments[g] for g in groups], dtype=np.int64)
        except KeyError as exc:
            raise ValueError(f"group {exc.args[0]!r} is not in the fold plan") from None


def group_kfold_split(groups, k: int = 10, seed: int = 0) -> FoldPlan:
    """Shuffle the distinct groups with ``seed`` and deal them round-robin."""
    distinct = sorted(set(np.asarray(groups).tolist()))
    if k < 2:
        raise ValueError("k must be at least 2")
    if len(distinct) < k:
        raise ValueError(f"{len(distinct)} groups cannot fill {k} folds")
    order = np.random.default_rng(seed).permutation(len(distinct))
    assignments = {distinct[g]: pos % k for pos, g in enumerate(order)}
    return FoldPlan(k, seed, assignments)


def rmse_per_sample(pred, truth) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.shape}")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def spearman(a, b) -> float | None:
    """Spearman rank correlation with averaged ranks for ties.

    Returns ``None`` when either input has no rank variance.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("inputs must be 1-D and of equal length")
    if a.shape[0] < 3:
        raise ValueError("need at least three observations")
    ra = rankdata(a) - (a.shape[0] + 1) / 2
    rb = rankdata(b) - (b.shape[0] + 1) / 2
    denom = math.sqrt(float(ra @ ra) * float(rb @ rb))
    if denom == 0:
        return None
    return float(np.clip((ra @ rb) / denom, -1.0, 1.0))


@dataclass(frozen=True)
class SampleRecord:
    setup: str
    fold: int
    planet_id: str
    spot: int
    decision_score: float
    rmse: float
    mse: float
    prediction: np.ndarray | None = field(default=None, compare=False)


@dataclass
class FoldModels:
    """Everything fitted on one train fold for one setup."""

    kind: SetupKind
    x_scaler: Standardizer
    ridge: RidgeModel
    space_scaler: Standardizer
    pca: PcaModel
    forest: IsolationForestModel

    def anomaly_space(self, X_std, pred) -> np.ndarray:
        if self.kind is SetupKind.X:
            return X_std
        if self.kind is SetupKind.Y_TRUE:
            return pred
        return reduced_shap(self.ridge, X_std)

    def predict(self, X) -> np.ndarray:
        return self.ridge.predict(self.x_scaler.transform(X))

    def score(self, X) -> tuple[np.ndarray, np.ndarray]:
        """(predictions, decision scores) for raw design-matrix rows."""
        X_std = self.x_scaler.transform(X)
        pred = self.ridge.predict(X_std)
        space = self.anomaly_space(X_std, pred)
        proj = self.pca.transform(self.space_scaler.transform(space))
        return pred, self.forest.decision_function(proj)

    def parameters(self) -> dict[str, np.ndarray]:
        """Every fitted array, for leakage checks."""
        out = {}
        for name, obj in (("x_scaler", self.x_scaler), ("ridge", self.ridge),
                          ("space_scaler", self.space_scaler), ("pca", self.pca),
                          ("forest", self.forest)):
            for attr, value in vars(obj).items():
                if isinstance(value, np.ndarray):
                    out[f"{name}.{attr}"] = value
        return out


def _forest_seed(seed: int, fold: int, kind: SetupKind) -> int:
    ss = np.random.SeedSequence([seed, fold, SETUP_ORDER.index(kind)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def fit_fold_models(X_train, Y_train, kind, pca_k: int = DEFAULT_PCA_K, alpha: float = 1.0,
                    n_trees: int = DEFAULT_TREES, psi: int | None = None, seed: int = 0,
                    backend: str | None = None) -> FoldModels:
    kind = SetupKind.parse(kind)
    X_train = np.asarray(X_train, dtype=np.float64)
    Y_train = np.asarray(Y_train, dtype=np.float64)
    x_scaler = fit_standardizer(X_train)
    X_std = x_scaler.transform(X_train)
    ridge = ridge_fit(X_std, Y_train, alpha)
    if kind is SetupKind.X:
        space = X_std
    elif kind is SetupKind.Y_TRUE:
        space = Y_train
    else:
        space = reduced_shap(ridge, X_std)
    space_scaler = fit_standardizer(space)
    z = space_scaler.transform(space)
    k = min(pca_k, z.shape[0] - 1, z.shape[1])
    pca = pca_fit(z, k)
    forest = iforest_fit(pca.transform(z), n_trees=n_trees, psi=psi, seed=seed, backend=backend)
    return FoldModels(kind, x_scaler, ridge, space_scaler, pca, forest)


@dataclass(frozen=True)
class ModelParams:
    pca_k: int = DEFAULT_PCA_K
    alpha: float = 1.0
    n_trees: int = DEFAULT_TREES
    psi: int | None = None


def _evaluate(train: Encoding, valid: Encoding, plan: FoldPlan, kind, seed: int,
              params: ModelParams, threads: int, models_out: list | None,
              backend: str | None) -> list[SampleRecord]:
    kind = SetupKind.parse(kind)
    folds = plan.folds_for(train.groups)
    if not np.array_equal(plan.folds_for(valid.groups), folds):
        raise ValueError("validation encoding is not row-aligned with the training encoding")

    def run_fold(f: int):
        tr = folds != f
        va = folds == f
        if len(set(train.groups[tr].tolist())) < 2:
            raise ValueError(f"fold {f} leaves fewer than two training groups")
        models = fit_fold_models(train.X[tr], train.Y[tr], kind, params.pca_k, params.alpha,
                                 params.n_trees, params.psi, _forest_seed(seed, f, kind),
                                 backend)
        rows = np.flatnonzero(va)
        pred, dec = models.score(valid.X[rows])
        sq = (pred - valid.Y[rows]) ** 2
        mse = sq.mean(axis=1)
        recs = [SampleRecord(kind.value, f, str(valid.groups[i]), int(valid.spots[i]),
                             float(dec[j]), float(np.sqrt(mse[j])), float(mse[j]), pred[j])
                for j, i in enumerate(rows)]
        return models, recs

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_fold, range(plan.k)))
    else:
        results = [run_fold(f) for f in range(plan.k)]
    records = []
    for models, recs in results:
        records.extend(recs)
        if models_out is not None:
            models_out.append(models)
    return records


def run_setup(enc: Encoding, plan: FoldPlan, kind, seed: int = 0,
              params: ModelParams = ModelParams(), threads: int = 1,
              models_out: list | None = None, backend: str | None = None) -> list[SampleRecord]:
    """Cross-validate one setup; records come back in fold order."""
    return _evaluate(enc, enc, plan, kind, seed, params, threads, models_out, backend)


def run_cross_dataset(train_enc: Encoding, valid_enc: Encoding, plan: FoldPlan, kind,
                      seed: int = 0, params: ModelParams = ModelParams(), threads: int = 1,
                      models_out: list | None = None, backend: str | None = None
                      ) -> list[SampleRecord]:
    """Train folds from ``train_enc``, validation folds from ``valid_enc``."""
    if (train_enc.X.shape[1] != valid_enc.X.shape[1]
            or train_enc.Y.shape[1] != valid_enc.Y.shape[1]):
        raise ValueError("encodings have different dimensions")
    if (not np.array_equal(train_enc.groups, valid_enc.groups)
            or not np.array_equal(train_enc.spots, valid_enc.spots)):
        raise ValueError("encodings do not cover the same planets in the same order")
    return _evaluate(train_enc, valid_enc, plan, kind, seed, params, threads, models_out, backend)


# --------------------------------------------------------------------------
# trade-off curves
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TradeoffPoint:
    threshold: float
    coverage: float
    rmse_accepted: float | None


@dataclass(frozen=True)
class TradeoffCurve:
    points: list[TradeoffPoint]
    setup: str = ""

    @property
    def thresholds(self) -> np.ndarray:
        return np.array([p.threshold for p in self.points])

    @property
    def coverage(self) -> np.ndarray:
        return np.array([p.coverage for p in self.points])

    @property
    def rmse(self) -> np.ndarray:
        return np.array([np.nan if p.rmse_accepted is None else p.rmse_accepted
                         for p in self.points])

    def best_with_coverage(self, min_coverage: float) -> TradeoffPoint | None:
        """Lowest-error point whose coverage is at least ``min_coverage``."""
        ok = [p for p in self.points if p.coverage >= min_coverage and p.rmse_accepted is not None]
        return min(ok, key=lambda p: p.rmse_accepted) if ok else None


def _scores_and_mse(records) -> tuple[np.ndarray, np.ndarray]:
    if not records:
        raise ValueError("no records")
    scores = np.array([r.decision_score for r in records])
    mse = np.array([r.mse for r in records])
    return scores, mse


def evaluate_threshold(records, threshold: float) -> TradeoffPoint:
    """Coverage and pooled RMSE of the records with ``decision_score >= threshold``."""
    scores, mse = _scores_and_mse(records)
    return _point(scores, mse, threshold)


def _point(scores, mse, threshold) -> TradeoffPoint:
    accepted = scores >= threshold
    n_acc = int(accepted.sum())
    rmse = float(np.sqrt(mse[accepted].mean())) if n_acc else None
    return TradeoffPoint(float(threshold), n_acc / scores.shape[0], rmse)


def tradeoff_curve(records, n_thresholds: int = DEFAULT_THRESHOLDS, setup: str = "") -> TradeoffCurve:
    """Sweep ``n_thresholds`` evenly spaced thresholds over the observed scores.

    A leading ``-inf`` threshold gives the accept-everything point. The
    accepted-set error pools squared errors over all accepted channels.
    """
    scores, mse = _scores_and_mse(records)
    if n_thresholds < 1:
        raise ValueError("n_thresholds must be positive")
    grid = np.linspace(scores.min(), scores.max(), n_thresholds)
    thresholds = np.concatenate([[-np.inf], grid])
    return TradeoffCurve([_point(scores, mse, t) for t in thresholds], setup)


def fold_average_curves(curves) -> TradeoffCurve:
    """Average per-fold curves on a shared 101-point coverage grid.

    Each curve is linearly interpolated in coverage; below its smallest
    non-zero coverage the error is held at that end point.
    """
    curves = list(curves)
    if not curves:
        raise ValueError("no curves to average")
    resampled = []
    for curve in curves:
        pts = [(p.coverage, p.rmse_accepted) for p in curve.points if p.rmse_accepted is not None]
        if not pts:
            raise ValueError("curve has no accepted points")
        cov, err = np.array(sorted(set(pts))).T
        cov, first = np.unique(cov, return_index=True)
        resampled.append(np.interp(COVERAGE_GRID, cov, err[first]))
    mean = np.mean(resampled, axis=0)
    points = [TradeoffPoint(float("nan"), float(c), float(e)) for c, e in zip(COVERAGE_GRID, mean)]
    return TradeoffCurve(points, curves[0].setup)


def per_fold_curves(records, n_thresholds: int = DEFAULT_THRESHOLDS) -> list[TradeoffCurve]:
    folds = sorted({r.fold for r in records})
    return [tradeoff_curve([r for r in records if r.fold == f], n_thresholds,
                           records[0].setup) for f in folds]


def pooled_rmse(records) -> float:
    _, mse = _scores_and_mse(records)
    return float(np.sqrt(mse.mean()))


def mean_sample_rmse(records) -> float:
    return float(np.mean([r.rmse for r in records]))


def score_error_spearman(records) -> float | None:
    """Spearman(-decision_score, rmse): positive when anomalies err more."""
    return spearman([-r.decision_score for r in records], [r.rmse for r in records])
