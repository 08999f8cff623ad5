import numpy as np
import pytest

from drbench.learners import fit_gbt, fit_random_forest


def _xy(n, p, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    return np.column_stack([np.ones(n), X]), rng


class TestRandomForest:
    def test_constant_outcome(self):
        X, _ = _xy(60, 3, seed=0)
        y = np.full(60, 2.5)
        fit = fit_random_forest(X, y, family="linear", seed=1, n_trees=25)
        assert fit.predict(X) == pytest.approx(np.full(60, 2.5), abs=1e-12)

    def test_pure_noise_probability_calibration(self):
        # out-of-fold mean probability stays near prevalence, averaged over seeds
        gaps = []
        for seed in range(20):
            rng = np.random.default_rng(1000 + seed)
            X = np.column_stack([np.ones(200), rng.normal(size=(200, 5))])
            y = (rng.random(200) < 0.35).astype(float)
            half = 100
            fit = fit_random_forest(X[:half], y[:half], family="logistic",
                                    seed=seed, n_trees=60)
            oof = fit.predict(X[half:])
            gaps.append(oof.mean() - y[:half].mean())
        assert abs(np.mean(gaps)) < 0.1

    def test_learns_step_function(self):
        X, rng = _xy(400, 4, seed=3)
        y = 3.0 * (X[:, 1] > 0) + rng.normal(size=400) * 0.1
        fit = fit_random_forest(X, y, family="linear", seed=7, n_trees=80)
        pred = fit.predict(X)
        assert ((pred > 1.5) == (X[:, 1] > 0)).mean() > 0.95

    def test_deterministic_given_seed(self):
        X, rng = _xy(100, 3, seed=4)
        y = rng.normal(size=100)
        a = fit_random_forest(X, y, family="linear", seed=9, n_trees=20).predict(X)
        b = fit_random_forest(X, y, family="linear", seed=9, n_trees=20).predict(X)
        c = fit_random_forest(X, y, family="linear", seed=10, n_trees=20).predict(X)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_probabilities_bounded(self):
        X, rng = _xy(120, 3, seed=5)
        y = (X[:, 1] > 0).astype(float)
        p = fit_random_forest(X, y, family="logistic", seed=2, n_trees=30).predict(X)
        assert (0 <= p).all() and (p <= 1).all()

    def test_min_rows(self):
        X, rng = _xy(10, 2, seed=6)
        with pytest.raises(Exception, match="20"):
            fit_random_forest(X, rng.normal(size=10), family="linear")


class TestGradientBoosting:
    def test_constant_outcome(self):
        X, _ = _xy(50, 2, seed=0)
        y = np.full(50, -1.25)
        fit = fit_gbt(X, y, family="linear", seed=1, n_trees=20)
        assert fit.predict(X) == pytest.approx(np.full(50, -1.25), abs=1e-12)

    def test_training_logloss_decreases_monotonically(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=200)
        y = (x > 0).astype(float)
        X = np.column_stack([np.ones(200), x])
        losses = []
        for rounds in range(1, 16):
            fit = fit_gbt(X, y, family="logistic", seed=0, n_trees=rounds)
            p = np.clip(fit.predict(X), 1e-12, 1 - 1e-12)
            losses.append(-(y * np.log(p) + (1 - y) * np.log(1 - p)).mean())
        diffs = np.diff(losses)
        assert (diffs < 1e-12).all()

    def test_regression_fits_smooth_signal(self):
        rng = np.random.default_rng(3)
        x = rng.uniform(-3, 3, 500)
        y = np.sin(x) + rng.normal(size=500) * 0.1
        X = np.column_stack([np.ones(500), x])
        fit = fit_gbt(X, y, family="linear", seed=4)
        rmse = np.sqrt(((fit.predict(X) - np.sin(x)) ** 2).mean())
        assert rmse < 0.15

    def test_probability_clamped(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=300)
        y = (x > 0).astype(float)
        X = np.column_stack([np.ones(300), x])
        p = fit_gbt(X, y, family="logistic", seed=6).predict(X)
        assert p.min() >= 1e-6 and p.max() <= 1 - 1e-6

    def test_deterministic(self):
        X, rng = _xy(150, 4, seed=7)
        y = rng.normal(size=150)
        a = fit_gbt(X, y, family="linear", seed=3, n_trees=30).predict(X)
        b = fit_gbt(X, y, family="linear", seed=3, n_trees=30).predict(X)
        assert np.array_equal(a, b)

    def test_prefix_property_of_boosting(self):
        # the first k trees of a longer fit equal the k-tree fit (no row sampling)
        X, rng = _xy(100, 2, seed=8)
        y = rng.normal(size=100)
        short = fit_gbt(X, y, family="linear", seed=0, n_trees=5)
        long = fit_gbt(X, y, family="linear", seed=0, n_trees=9)
        for t_short, t_long in zip(short.parameters["trees"], long.parameters["trees"]):
            for a, b in zip(t_short, t_long):
                assert np.array_equal(a, b)
