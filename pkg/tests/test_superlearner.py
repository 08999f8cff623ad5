import warnings

import numpy as np
import pytest

from drbench.formula import DesignMatrix
from drbench.learners import LearnerError, LearnerSpec, Task
from drbench.superlearner import (
    LIBRARY_GROUPS,
    LOG_LOSS,
    SQUARED_ERROR,
    EnsembleSpec,
    ensemble_for,
    fit_superlearner,
    predict_ensemble,
    solve_simplex_weights,
    _fold_assignments,
)


def _design(n, p, seed=0):
    rng = np.random.default_rng(seed)
    vals = np.column_stack([np.ones(n), rng.normal(size=(n, p))])
    cols = ("(Intercept)",) + tuple(f"X{i}" for i in range(1, p + 1))
    return DesignMatrix(cols, vals), rng


class TestWeightSolver:
    def test_single_candidate(self):
        w = solve_simplex_weights(np.ones((10, 1)), np.zeros(10), SQUARED_ERROR)
        assert w.tolist() == [1.0]

    def test_better_candidate_gets_more_weight(self):
        # candidate 1 tracks y closely; candidate 2 is the same plus noise
        rng = np.random.default_rng(0)
        y = rng.normal(size=400)
        Z = np.column_stack([y + 0.05 * rng.normal(size=400),
                             y + 0.8 * rng.normal(size=400)])
        w = solve_simplex_weights(Z, y, SQUARED_ERROR)
        assert w[0] > w[1]
        # grid-search oracle over the 1-simplex at resolution 1e-4
        grid = np.linspace(0.0, 1.0, 10001)
        losses = [((y - (g * Z[:, 0] + (1 - g) * Z[:, 1])) ** 2).mean() for g in grid]
        best = grid[int(np.argmin(losses))]
        solver_loss = ((y - Z @ w) ** 2).mean()
        assert solver_loss <= min(losses) + 1e-6
        assert w[0] == pytest.approx(best, abs=1e-3)

    def test_log_loss_solver_on_simplex(self):
        rng = np.random.default_rng(1)
        y = (rng.random(300) < 0.5).astype(float)
        Z = np.column_stack([np.clip(y * 0.8 + 0.1 + 0.05 * rng.random(300), 0, 1),
                             np.full(300, y.mean())])
        w = solve_simplex_weights(Z, y, LOG_LOSS)
        assert w.min() >= 0
        assert w.sum() == pytest.approx(1.0, abs=1e-9)
        assert w[0] > w[1]


class TestFitSuperlearner:
    def test_single_candidate_weight_one(self):
        X, rng = _design(40, 2)
        y = X.values @ np.array([1.0, 2.0, 0.0]) + rng.normal(size=40) * 0.1
        spec = EnsembleSpec(candidates=(LearnerSpec("ols"),))
        fit = fit_superlearner(spec, X, y, Task.REGRESSION, seed=0)
        assert fit.weights.tolist() == [1.0]

    def test_simplex_invariant_and_cv_optimality(self):
        X, rng = _design(120, 3, seed=2)
        y = np.sin(X.values[:, 1]) * 2 + rng.normal(size=120) * 0.3
        spec = ensemble_for("smooth", Task.REGRESSION)
        fit = fit_superlearner(spec, X, y, Task.REGRESSION, seed=1)
        assert fit.weights.min() >= 0
        assert fit.weights.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.isfinite(fit.cv_risk).all()

    def test_duplicate_candidates_equal_predictions(self):
        X, rng = _design(60, 2, seed=3)
        y = X.values[:, 1] + rng.normal(size=60) * 0.2
        spec = EnsembleSpec(candidates=(LearnerSpec("ols"), LearnerSpec("ols")))
        fit = fit_superlearner(spec, X, y, Task.REGRESSION, seed=4)
        solo = fit_superlearner(EnsembleSpec(candidates=(LearnerSpec("ols"),)),
                                X, y, Task.REGRESSION, seed=4)
        assert predict_ensemble(fit, X) == pytest.approx(predict_ensemble(solo, X), abs=1e-10)

    def test_failed_candidate_gets_zero_weight(self):
        # spline requires 20 rows; 24 rows with 5 folds leaves 19-20 per training split
        X, rng = _design(24, 2, seed=5)
        y = X.values[:, 1] + rng.normal(size=24) * 0.1
        spec = EnsembleSpec(candidates=(LearnerSpec("ols"), LearnerSpec("spline")))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            fit = fit_superlearner(spec, X, y, Task.REGRESSION, seed=6)
        assert fit.weights[1] == 0.0
        assert fit.weights[0] == pytest.approx(1.0)
        assert any("spline" in str(w.message) for w in caught)

    def test_all_candidates_failed(self):
        X, rng = _design(24, 2, seed=7)
        y = X.values[:, 1]
        spec = EnsembleSpec(candidates=(LearnerSpec("spline"),))
        with pytest.raises(LearnerError, match="all ensemble candidates failed"):
            fit_superlearner(spec, X, y, Task.REGRESSION, seed=8)

    def test_stratified_folds_partition_and_balance(self):
        rng = np.random.default_rng(9)
        y = (rng.random(53) < 0.3).astype(float)
        assign = _fold_assignments(53, 5, y, stratify=True, rng=rng)
        assert np.bincount(assign, minlength=5).sum() == 53
        for k in range(5):
            train = y[assign != k]
            assert train.min() == 0.0 and train.max() == 1.0

    def test_plain_folds_partition(self):
        rng = np.random.default_rng(10)
        assign = _fold_assignments(101, 5, np.zeros(101), stratify=False, rng=rng)
        sizes = np.bincount(assign, minlength=5)
        assert sizes.sum() == 101
        assert sizes.max() - sizes.min() <= 1

    def test_ensemble_cv_risk_not_worse_than_best_candidate(self):
        for seed in range(5):
            X, rng = _design(150, 3, seed=20 + seed)
            y = np.abs(X.values[:, 1]) + rng.normal(size=150) * 0.4
            spec = EnsembleSpec(candidates=(LearnerSpec("ols"),
                                            LearnerSpec("gbt", {"n_trees": 30}),))
            fit = fit_superlearner(spec, X, y, Task.REGRESSION, seed=seed)
            assert fit.weights.sum() == pytest.approx(1.0, abs=1e-9)
            assert fit.cv_risk_ensemble <= fit.cv_risk.min() + 1e-9


class TestPredictEnsemble:
    def test_degenerate_weights_follow_candidate(self):
        X, rng = _design(50, 2, seed=11)
        y = X.values[:, 1] * 2 + rng.normal(size=50) * 10  # noisy: ols vs gbt differ
        spec = EnsembleSpec(candidates=(LearnerSpec("ols"), LearnerSpec("gbt", {"n_trees": 10})))
        fit = fit_superlearner(spec, X, y, Task.REGRESSION, seed=12)
        manual = np.zeros(50)
        for w, cand in zip(fit.weights, fit.refit_candidates):
            if w > 0:
                manual += w * cand.predict(X)
        assert predict_ensemble(fit, X) == pytest.approx(manual, abs=1e-12)

    def test_constant_mixture(self):
        # two constant predictors 0.2 / 0.6 at weights .5/.5 must give 0.4
        Z = np.column_stack([np.full(10, 0.2), np.full(10, 0.6)])
        w = np.array([0.5, 0.5])
        assert (Z @ w) == pytest.approx(np.full(10, 0.4))

    def test_probability_clamp(self):
        X, rng = _design(80, 2, seed=13)
        y = (X.values[:, 1] > 0).astype(float)
        spec = EnsembleSpec(candidates=(LearnerSpec("logistic_glm"),))
        fit = fit_superlearner(spec, X, y, Task.BINARY_PROBABILITY, seed=14)
        p = predict_ensemble(fit, X)
        assert (0 <= p).all() and (p <= 1).all()

    def test_column_mismatch_rejected(self):
        X, rng = _design(40, 2, seed=15)
        y = X.values[:, 1]
        fit = fit_superlearner(EnsembleSpec(candidates=(LearnerSpec("ols"),)),
                               X, y, Task.REGRESSION, seed=16)
        other = DesignMatrix(("(Intercept)", "Z1", "Z2"), X.values)
        with pytest.raises(LearnerError, match="columns"):
            predict_ensemble(fit, other)


class TestGroups:
    def test_library_groups(self):
        assert LIBRARY_GROUPS["smooth"] == ("glm", "lasso", "spline")
        assert LIBRARY_GROUPS["nonsmooth"] == ("gbt", "rf")
        assert set(LIBRARY_GROUPS["both"]) == set(LIBRARY_GROUPS["smooth"]) | set(LIBRARY_GROUPS["nonsmooth"])

    def test_ensemble_for_maps_tasks(self):
        spec = ensemble_for("smooth", Task.BINARY_PROBABILITY)
        kinds = [c.kind for c in spec.candidates]
        assert kinds == ["logistic_glm", "lasso_logistic", "spline"]
        spec = ensemble_for("smooth", Task.REGRESSION)
        assert [c.kind for c in spec.candidates] == ["ols", "lasso_linear", "spline"]

    def test_unknown_group(self):
        with pytest.raises(LearnerError, match="library group"):
            ensemble_for("deep", Task.REGRESSION)
