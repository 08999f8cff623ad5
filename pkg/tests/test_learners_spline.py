import numpy as np
import pytest

from drbench.learners import fit_ols, fit_spline


def _oracle_natural_basis(x, knots):
    """Independent truncated-power natural cubic basis (test-local)."""
    K = len(knots)
    tK = knots[-1]

    def d(k):
        return (np.maximum(x - knots[k], 0) ** 3 - np.maximum(x - tK, 0) ** 3) / (tK - knots[k])

    cols = [x]
    for k in range(K - 2):
        cols.append(d(k) - d(K - 2))
    return np.column_stack(cols)


class TestSpline:
    def test_linear_signal_matches_ols(self):
        rng = np.random.default_rng(0)
        X = np.column_stack([np.ones(100), rng.normal(size=(100, 2))])
        y = X @ np.array([1.0, 2.0, -0.5])
        spl = fit_spline(X, y, family="linear")
        ols = fit_ols(X, y)
        assert np.abs(spl.predict(X) - ols.predict(X)).max() < 1e-6

    def test_quadratic_rmse_under_oracle_threshold(self):
        x = np.linspace(-2, 2, 200)
        y = x ** 2
        X = np.column_stack([np.ones(200), x])
        spl = fit_spline(X, y, family="linear")
        rmse = np.sqrt(((spl.predict(X) - y) ** 2).mean())
        assert rmse < 0.05
        # oracle: plain regression on the same knot basis
        knots = np.unique(np.concatenate(([x.min()], np.quantile(x, (0.25, 0.5, 0.75)), [x.max()])))
        B = np.column_stack([np.ones(200), _oracle_natural_basis(x, knots)])
        coef, *_ = np.linalg.lstsq(B, y, rcond=None)
        oracle_rmse = np.sqrt(((B @ coef - y) ** 2).mean())
        assert rmse == pytest.approx(oracle_rmse, abs=1e-8)

    def test_constant_outcome(self):
        rng = np.random.default_rng(1)
        X = np.column_stack([np.ones(50), rng.normal(size=50)])
        y = np.full(50, 3.25)
        spl = fit_spline(X, y, family="linear")
        assert spl.predict(X) == pytest.approx(np.full(50, 3.25), abs=1e-8)

    def test_binary_columns_stay_linear(self):
        rng = np.random.default_rng(2)
        b = (rng.random(80) < 0.4).astype(float)
        X = np.column_stack([np.ones(80), b])
        y = 1.0 + 2.0 * b + rng.normal(size=80) * 0.01
        spl = fit_spline(X, y, family="linear")
        plan = spl.parameters["plan"]
        assert plan == [(1, None)]  # no knots for the binary column

    def test_logistic_family_probabilities(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=150)
        y = (rng.random(150) < 1 / (1 + np.exp(-np.sin(2 * x) * 2))).astype(float)
        X = np.column_stack([np.ones(150), x])
        spl = fit_spline(X, y, family="logistic")
        p = spl.predict(X)
        assert (0 <= p).all() and (p <= 1).all()
        # the spline should track the non-monotone signal better than linear logit
        from drbench.learners import fit_logistic

        lin = fit_logistic(X, y).predict(X)
        truth = 1 / (1 + np.exp(-np.sin(2 * x) * 2))
        assert ((p - truth) ** 2).mean() < ((lin - truth) ** 2).mean()

    def test_requires_20_rows(self):
        X = np.ones((10, 1))
        with pytest.raises(Exception, match="20"):
            fit_spline(X, np.ones(10), family="linear")
