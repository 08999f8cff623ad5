import numpy as np
import pytest
from scipy.special import expit

from drbench.learners import fit_lasso, fit_ols, kkt_residuals


def _standardized_design(n, p, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    X = (X - X.mean(axis=0)) / X.std(axis=0)
    return np.column_stack([np.ones(n), X])


def _objective(X, y, coef, intercept, lam):
    """Penalized objective on the standardized scale the solver works in."""
    Z = X[:, 1:]
    resid = y - intercept - Z @ coef
    return 0.5 * (resid ** 2).mean() + lam * np.abs(coef).sum()


def _ista_oracle(Z, yc, lam, iters=200000):
    """Proximal-gradient (ISTA) solver, independent of coordinate descent."""
    n, p = Z.shape
    L = np.linalg.eigvalsh(Z.T @ Z / n).max()
    beta = np.zeros(p)
    t = 1.0 / L
    for _ in range(iters):
        grad = Z.T @ (Z @ beta - yc) / n
        step = beta - t * grad
        new = np.sign(step) * np.maximum(np.abs(step) - t * lam, 0.0)
        if np.abs(new - beta).max() < 1e-12:
            beta = new
            break
        beta = new
    return beta


class TestLinearLasso:
    def test_zero_penalty_matches_ols(self):
        X = _standardized_design(60, 4, seed=0)
        rng = np.random.default_rng(1)
        y = X @ np.array([0.5, 1.0, -2.0, 0.0, 0.7]) + rng.normal(size=60) * 0.1
        ols = fit_ols(X, y).parameters["coef"]
        lasso = fit_lasso(X, y, lam=0.0, family="linear")
        pred_diff = np.abs(X @ ols - lasso.predict(X)).max()
        assert pred_diff < 1e-5

    def test_lambda_max_zeroes_everything(self):
        X = _standardized_design(50, 5, seed=2)
        rng = np.random.default_rng(3)
        y = X[:, 1] * 2.0 + rng.normal(size=50)
        n = X.shape[0]
        lam_max = np.abs(X[:, 1:].T @ (y - y.mean())).max() / n
        fit = fit_lasso(X, y, lam=lam_max * 1.0001, family="linear")
        assert np.abs(fit.parameters["beta_std"]).max() == 0.0
        assert fit.predict(X) == pytest.approx(np.full(n, y.mean()), abs=1e-10)

    def test_objective_matches_proximal_oracle(self):
        X = _standardized_design(40, 5, seed=4)
        rng = np.random.default_rng(5)
        y = X @ np.array([0.3, 1.5, 0.0, -0.8, 0.0, 0.4]) + rng.normal(size=40) * 0.5
        lam = 0.08
        fit = fit_lasso(X, y, lam=lam, family="linear")
        Z = X[:, 1:]  # already standardized up to sample moments
        Zs = (Z - Z.mean(axis=0)) / Z.std(axis=0)
        yc = y - y.mean()
        beta_oracle = _ista_oracle(Zs, yc, lam)
        f_oracle = 0.5 * ((yc - Zs @ beta_oracle) ** 2).mean() + lam * np.abs(beta_oracle).sum()
        f_fit = 0.5 * ((yc - Zs @ fit.parameters["beta_std"]) ** 2).mean() \
            + lam * np.abs(fit.parameters["beta_std"]).sum()
        assert f_fit == pytest.approx(f_oracle, abs=1e-6)

    def test_kkt_conditions_on_active_set(self):
        X = _standardized_design(80, 6, seed=6)
        rng = np.random.default_rng(7)
        y = X @ np.array([0.0, 2.0, -1.0, 0.0, 0.0, 0.5, 0.0]) + rng.normal(size=80) * 0.3
        fit = fit_lasso(X, y, lam=0.05, family="linear")
        res = kkt_residuals(fit, X, y)
        assert res.size > 0
        assert res.max() < 1e-5

    def test_cv_selects_a_lambda_on_the_path(self):
        X = _standardized_design(60, 4, seed=8)
        rng = np.random.default_rng(9)
        y = 2.0 * X[:, 1] + rng.normal(size=60) * 0.5
        fit = fit_lasso(X, y, family="linear", seed=3)
        lam = fit.parameters["lam"]
        assert 0 < lam <= fit.parameters["lam_max"]
        # strong predictor must survive CV-chosen penalty
        assert abs(fit.parameters["coef"][1]) > 0.5

    def test_deterministic_given_seed(self):
        X = _standardized_design(50, 4, seed=10)
        rng = np.random.default_rng(11)
        y = X[:, 2] + rng.normal(size=50)
        a = fit_lasso(X, y, family="linear", seed=5).parameters["coef"]
        b = fit_lasso(X, y, family="linear", seed=5).parameters["coef"]
        assert np.array_equal(a, b)


class TestLogisticLasso:
    def test_heavy_penalty_gives_constant_probability(self):
        X = _standardized_design(60, 4, seed=12)
        rng = np.random.default_rng(13)
        y = (rng.random(60) < expit(1.5 * X[:, 1])).astype(float)
        fit = fit_lasso(X, y, lam=10.0, family="logistic")
        p = fit.predict(X)
        assert p.std() < 1e-8
        assert p.mean() == pytest.approx(y.mean(), abs=1e-6)

    def test_zero_penalty_recovers_signal(self):
        rng = np.random.default_rng(14)
        X = _standardized_design(300, 3, seed=14)
        y = (rng.random(300) < expit(2.0 * X[:, 1] - 1.0 * X[:, 2])).astype(float)
        fit = fit_lasso(X, y, lam=1e-4, family="logistic")
        coef = fit.parameters["beta_std"]
        assert coef[0] > 0.5
        assert coef[1] < -0.2

    def test_objective_matches_proximal_oracle(self):
        rng = np.random.default_rng(15)
        X = _standardized_design(50, 4, seed=15)
        y = (rng.random(50) < expit(X[:, 1] - 0.5 * X[:, 3])).astype(float)
        lam = 0.03
        fit = fit_lasso(X, y, lam=lam, family="logistic")
        Z = X[:, 1:]
        Zs = (Z - Z.mean(axis=0)) / Z.std(axis=0)

        def objective(b0, beta):
            eta = b0 + Zs @ beta
            return float(np.logaddexp(0, eta).mean() - (y * eta).mean()
                         + lam * np.abs(beta).sum())

        # proximal gradient with a joint intercept step
        beta = np.zeros(Zs.shape[1])
        b0 = 0.0
        L = np.linalg.eigvalsh(Zs.T @ Zs / len(y)).max() * 0.25 + 0.25
        t = 1.0 / L
        for _ in range(100000):
            p = expit(b0 + Zs @ beta)
            gb = Zs.T @ (p - y) / len(y)
            g0 = float((p - y).mean())
            step = beta - t * gb
            new = np.sign(step) * np.maximum(np.abs(step) - t * lam, 0.0)
            b0_new = b0 - t * g0
            if max(np.abs(new - beta).max(), abs(b0_new - b0)) < 1e-11:
                beta, b0 = new, b0_new
                break
            beta, b0 = new, b0_new
        f_oracle = objective(b0, beta)
        f_fit = objective(_fit_b0_on_std(fit, Z), fit.parameters["beta_std"])
        assert f_fit <= f_oracle + 1e-6

    def test_probabilities_clamped(self):
        rng = np.random.default_rng(16)
        X = _standardized_design(100, 2, seed=16)
        y = (X[:, 1] > 0).astype(float)
        p = fit_lasso(X, y, lam=1e-5, family="logistic").predict(X)
        assert p.min() >= 1e-6 and p.max() <= 1 - 1e-6


def _fit_b0_on_std(fit, Z):
    """Intercept in the standardized parameterization used by the oracle."""
    coef = fit.parameters["coef"][1:]
    return fit.parameters["intercept"] + float(Z.mean(axis=0) @ coef)
