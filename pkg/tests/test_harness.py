import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import spearmanr

from safetycage.encode import Encoding, EncodingConfig
from safetycage.harness import (
    FoldPlan,
    ModelParams,
    SampleRecord,
    SetupKind,
    TradeoffCurve,
    TradeoffPoint,
    evaluate_threshold,
    fold_average_curves,
    group_kfold_split,
    mean_sample_rmse,
    per_fold_curves,
    pooled_rmse,
    rmse_per_sample,
    run_cross_dataset,
    run_setup,
    spearman,
    tradeoff_curve,
)

FAST = ModelParams(pca_k=4, n_trees=15)


def random_encoding(n_groups=12, per=5, d=9, m=3, seed=0):
    rng = np.random.default_rng(seed)
    n = n_groups * per
    X = rng.normal(size=(n, d))
    Y = X[:, :m] * 0.5 + rng.normal(scale=0.1, size=(n, m))
    groups = np.repeat([f"g{i:02d}" for i in range(n_groups)], per)
    spots = np.tile(np.arange(per), n_groups)
    return Encoding(X, Y, groups, spots, EncodingConfig())


def records_from(scores, mse, folds=None):
    folds = [0] * len(scores) if folds is None else folds
    return [SampleRecord("x", int(f), f"p{i}", 0, float(s), float(np.sqrt(e)), float(e))
            for i, (s, e, f) in enumerate(zip(scores, mse, folds))]


class TestSplit:
    def test_balance_and_determinism(self):
        groups = [f"g{i}" for i in range(20) for _ in range(3)]
        plan = group_kfold_split(groups, 10, seed=4)
        counts = np.bincount(list(plan.assignments.values()), minlength=10)
        assert np.all(counts == 2)
        assert plan == group_kfold_split(groups, 10, seed=4)

    @settings(max_examples=40)
    @given(st.integers(2, 40), st.integers(2, 10), st.integers(0, 1000))
    def test_groups_stay_together(self, n_groups, k, seed):
        if n_groups < k:
            with pytest.raises(ValueError):
                group_kfold_split(list(range(n_groups)), k, seed)
            return
        groups = np.repeat(np.arange(n_groups), 3)
        folds = group_kfold_split(groups, k, seed).folds_for(groups)
        for g in range(n_groups):
            assert len(set(folds[groups == g])) == 1
        sizes = np.bincount(folds // 1, minlength=k) // 3
        assert sizes.max() - sizes.min() <= 1

    def test_unknown_group(self):
        plan = group_kfold_split(["a", "b"], 2)
        with pytest.raises(ValueError):
            plan.folds_for(["c"])


class TestMetrics:
    def test_rmse_examples(self):
        assert rmse_per_sample([1, 2], [1, 2]) == 0.0
        assert rmse_per_sample(np.full(55, 0.11), np.full(55, 0.1)) == pytest.approx(0.01)
        assert rmse_per_sample([0.3, 0.4], [0, 0]) == pytest.approx(np.sqrt(0.125), abs=1e-15)
        assert rmse_per_sample([0.3, 0.4], [0, 0]) == pytest.approx(0.35355, abs=1e-5)

    def test_spearman_examples(self):
        assert spearman([1, 2, 3], [4, 5, 9]) == pytest.approx(1.0)
        assert spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
        # centred ranks [-1.5, 0, 0, 1.5] and [-1, -1, 1, 1]: 3 / sqrt(4.5 * 4)
        assert spearman([1, 2, 2, 3], [1, 1, 2, 2]) == pytest.approx(3 / np.sqrt(18), abs=1e-12)
        assert spearman([1, 2, 2, 3], [1, 1, 2, 2]) == pytest.approx(0.7071, abs=1e-4)
        assert spearman([1, 1, 1], [1, 2, 3]) is None

    @settings(max_examples=40)
    @given(st.lists(st.tuples(st.integers(0, 5), st.floats(-1, 1)), min_size=3, max_size=40))
    def test_spearman_matches_scipy(self, pairs):
        a, b = map(np.array, zip(*pairs))
        got = spearman(a, b)
        if np.ptp(a) == 0 or np.ptp(b) == 0:
            assert got is None
        else:
            assert got == pytest.approx(spearmanr(a, b).statistic, abs=1e-12)


class TestCurves:
    def test_extremes(self, rng):
        scores = rng.uniform(-0.2, 0.2, 50)
        mse = rng.uniform(0, 1e-4, 50)
        recs = records_from(scores, mse)
        curve = tradeoff_curve(recs, 201)
        assert len(curve.points) == 202
        first = curve.points[0]
        assert first.threshold == -np.inf and first.coverage == 1.0
        assert first.rmse_accepted == pytest.approx(np.sqrt(mse.mean()), abs=1e-15)
        none = evaluate_threshold(recs, scores.max() + 1)
        assert none.coverage == 0 and none.rmse_accepted is None
        tie = evaluate_threshold(recs, scores[3])
        assert tie.coverage == np.mean(scores >= scores[3])

    @settings(max_examples=40)
    @given(st.lists(st.floats(-0.5, 0.5), min_size=1, max_size=60), st.integers(1, 30))
    def test_coverage_non_increasing(self, scores, n):
        curve = tradeoff_curve(records_from(scores, np.ones(len(scores))), n)
        assert np.all(np.diff(curve.coverage) <= 0)

    def test_empty(self):
        with pytest.raises(ValueError, match="no records"):
            tradeoff_curve([])

    def test_fold_average(self):
        def curve(rmse_at_half):
            return TradeoffCurve([TradeoffPoint(0, 1.0, 0.5), TradeoffPoint(1, 0.5, rmse_at_half),
                                  TradeoffPoint(2, 0.0, None)])
        avg = fold_average_curves([curve(0.1), curve(0.3)])
        assert avg.points[50].coverage == 0.5
        assert avg.points[50].rmse_accepted == pytest.approx(0.2)
        single = fold_average_curves([curve(0.1)])
        assert single.rmse == pytest.approx(fold_average_curves([curve(0.1), curve(0.1)]).rmse)
        assert single.points[75].rmse_accepted == pytest.approx(0.3)

    def test_pooled_vs_mean(self):
        recs = records_from([0, 0], [0.01, 0.09])
        assert pooled_rmse(recs) == pytest.approx(np.sqrt(0.05))
        assert mean_sample_rmse(recs) == pytest.approx(0.2)


class TestRuns:
    @pytest.mark.parametrize("kind", list(SetupKind))
    def test_every_sample_once(self, kind, backend):
        enc = random_encoding()
        plan = group_kfold_split(enc.groups, 4, seed=1)
        recs = run_setup(enc, plan, kind, seed=2, params=FAST, backend=backend)
        keys = [(r.planet_id, r.spot) for r in recs]
        assert len(keys) == len(set(keys)) == len(enc)
        assert all(-0.5 < r.decision_score < 0.5 and np.isfinite(r.rmse) for r in recs)
        assert [r.fold for r in recs] == sorted(r.fold for r in recs)
        folds = plan.folds_for([r.planet_id for r in recs])
        assert np.array_equal(folds, [r.fold for r in recs])

    def test_leave_one_group_out(self):
        enc = random_encoding(n_groups=6)
        recs = run_setup(enc, group_kfold_split(enc.groups, 6), "x", params=FAST)
        assert len(recs) == len(enc)

    def test_threads_and_backends_agree(self):
        enc = random_encoding()
        plan = group_kfold_split(enc.groups, 4, seed=1)
        a = run_setup(enc, plan, "x_shap", seed=3, params=FAST, threads=1, backend="numpy")
        b = run_setup(enc, plan, "x_shap", seed=3, params=FAST, threads=3)
        assert a == b

    def test_too_few_training_groups(self):
        enc = random_encoding(n_groups=2)
        with pytest.raises(ValueError):
            run_setup(enc, group_kfold_split(enc.groups, 2), "x", params=FAST)

    @pytest.mark.parametrize("kind", list(SetupKind))
    def test_no_leakage(self, kind):
        enc = random_encoding()
        plan = group_kfold_split(enc.groups, 4, seed=1)
        folds = plan.folds_for(enc.groups)
        base = []
        run_setup(enc, plan, kind, params=FAST, models_out=base)
        for f in range(plan.k):
            X, Y = enc.X.copy(), enc.Y.copy()
            X[folds == f] += 1000.0
            Y[folds == f] *= -3.0
            changed = []
            run_setup(Encoding(X, Y, enc.groups, enc.spots, enc.config), plan, kind,
                      params=FAST, models_out=changed)
            pa, pb = base[f].parameters(), changed[f].parameters()
            assert pa.keys() == pb.keys() and len(pa) >= 10
            for name in pa:
                assert np.array_equal(pa[name], pb[name]), name

    def test_cross_identity(self):
        enc = random_encoding()
        plan = group_kfold_split(enc.groups, 3, seed=5)
        assert run_cross_dataset(enc, enc, plan, "y_true", params=FAST) == \
            run_setup(enc, plan, "y_true", params=FAST)

    def test_cross_validation_rows_come_from_valid(self):
        enc = random_encoding()
        drifted = Encoding(enc.X + 0.5, enc.Y, enc.groups, enc.spots, enc.config)
        plan = group_kfold_split(enc.groups, 3, seed=5)
        clean = run_setup(enc, plan, "x", params=FAST)
        cross = run_cross_dataset(enc, drifted, plan, "x", params=FAST)
        assert mean_sample_rmse(cross) > mean_sample_rmse(clean)
        assert np.mean([r.decision_score for r in cross]) < np.mean([r.decision_score for r in clean])

    def test_cross_mismatch(self):
        enc = random_encoding()
        other = Encoding(enc.X, enc.Y, enc.groups[::-1], enc.spots, enc.config)
        with pytest.raises(ValueError):
            run_cross_dataset(enc, other, group_kfold_split(enc.groups, 3), "x", params=FAST)

    def test_duplicate_groups_symmetric(self):
        enc = random_encoding(n_groups=6)
        X = np.vstack([enc.X, enc.X[:5]])
        Y = np.vstack([enc.Y, enc.Y[:5]])
        groups = np.concatenate([enc.groups, ["copy"] * 5])
        spots = np.concatenate([enc.spots, enc.spots[:5]])
        dup = Encoding(X, Y, groups, spots, enc.config)
        # the copy shares a fold with its original so both see the same training rows
        plan = group_kfold_split(enc.groups, 3, seed=0)
        assign = dict(plan.assignments, copy=plan.assignments["g00"])
        recs = run_setup(dup, FoldPlan(3, 0, assign), "x", params=FAST)
        a = sorted((r.spot, r.decision_score, r.rmse) for r in recs if r.planet_id == "g00")
        b = sorted((r.spot, r.decision_score, r.rmse) for r in recs if r.planet_id == "copy")
        assert a == b

    def test_in_fold_training_scores_mostly_inliers(self, small_dataset):
        from safetycage.encode import encode_dataset
        from safetycage.harness import fit_fold_models
        enc = encode_dataset(small_dataset)
        models = fit_fold_models(enc.X, enc.Y, "x", pca_k=5, n_trees=50)
        _, dec = models.score(enc.X)
        assert np.median(dec) > 0

    def test_per_fold_curves(self):
        enc = random_encoding()
        recs = run_setup(enc, group_kfold_split(enc.groups, 4), "x", params=FAST)
        curves = per_fold_curves(recs, 11)
        assert len(curves) == 4 and all(len(c.points) == 12 for c in curves)
        avg = fold_average_curves(curves)
        assert avg.points[-1].rmse_accepted == pytest.approx(
            np.mean([c.points[0].rmse_accepted for c in curves]))
