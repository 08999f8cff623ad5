"""L1-penalized linear and logistic regression by coordinate descent.

The solver works on internally standardized columns (mean 0, sd 1); the
intercept is unpenalized. The objective convention is

    linear:    RSS / (2n) + lam * ||beta||_1
    logistic:  -loglik / n + lam * ||beta||_1

so ``lam_max = max_j |x_j' (y - ybar)| / n`` zeroes every penalized
coefficient. When ``lam`` is unset it is chosen by 5-fold cross-validation
over a 50-point log-spaced path from ``lam_max`` down to ``1e-3 * lam_max``.
"""

from __future__ import annotations

import numpy as np
from numba import njit
from scipy.special import expit

from drbench.learners.base import (
    PROB_EPS,
    FittedLearner,
    LearnerError,
    LearnerSpec,
    Task,
    check_xy,
)


@njit(cache=True)
def _cd_solve(G, c, beta, lam_n, tol, max_sweeps):
    """Coordinate descent on the covariance form.

    Minimizes 0.5 beta'G beta - c'beta + lam_n * ||beta||_1 (all coordinates
    penalized; the intercept is handled outside by centering). ``G`` and
    ``c`` are X'X and X'y of standardized columns; ``lam_n`` is n*lam.
    """
    p = beta.shape[0]
    grad = G @ beta
    for _ in range(max_sweeps):
        max_delta = 0.0
        for j in range(p):
            gjj = G[j, j]
            if gjj <= 0.0:
                continue
            b_old = beta[j]
            rho = c[j] - grad[j] + gjj * b_old
            if rho > lam_n:
                b_new = (rho - lam_n) / gjj
            elif rho < -lam_n:
                b_new = (rho + lam_n) / gjj
            else:
                b_new = 0.0
            d = b_new - b_old
            if d != 0.0:
                grad += G[:, j] * d
                beta[j] = b_new
                if abs(d) > max_delta:
                    max_delta = abs(d)
        if max_delta < tol:
            break
    return beta


def _standardize(values: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Split off the intercept and return standardized feature columns."""
    mean = values.mean(axis=0)
    sd = values.std(axis=0)
    keep = sd > 1e-12  # constant columns carry no signal; coefficient stays 0
    Z = (values[:, keep] - mean[keep]) / sd[keep]
    return Z, mean, sd, keep


def _linear_path(Z, yc, lams, tol):
    """Warm-started path of standardized coefficients, one row per lambda."""
    n, p = Z.shape
    G = Z.T @ Z
    c = Z.T @ yc
    beta = np.zeros(p)
    out = np.empty((len(lams), p))
    for i, lam in enumerate(lams):
        beta = _cd_solve(G, c, beta, lam * n, tol, 1000)
        out[i] = beta
    return out


def _logistic_path(Z, y, lams, tol, max_irls: int = 60):
    """Penalized IRLS with an inner coordinate-descent solve, warm started."""
    n, p = Z.shape
    out = np.empty((len(lams), p))
    intercepts = np.empty(len(lams))
    beta = np.zeros(p)
    b0 = float(np.log(y.mean() / (1.0 - y.mean())))
    for i, lam in enumerate(lams):
        for _ in range(max_irls):
            eta = b0 + Z @ beta
            prob = expit(eta)
            w = np.clip(prob * (1.0 - prob), 1e-6, None)
            z = eta + (y - prob) / w
            # weighted covariance form; intercept absorbed by weighted centering
            wsum = w.sum()
            zbar = (w @ z) / wsum
            xbar = (w[:, None] * Z).sum(axis=0) / wsum
            Zc = Z - xbar
            Zw = Zc * w[:, None]
            G = Zc.T @ Zw
            c = Zw.T @ (z - zbar)
            new = _cd_solve(G, c, beta.copy(), lam * n, tol, 1000)
            b0_new = zbar - float(xbar @ new)
            delta = max(np.max(np.abs(new - beta)), abs(b0_new - b0))
            beta, b0 = new, b0_new
            if delta < tol:
                break
        out[i] = beta
        intercepts[i] = b0
    return out, intercepts


def _cv_folds(n: int, folds: int, y: np.ndarray, stratify: bool, rng: np.random.Generator):
    """Deterministic fold assignment; stratified for binary targets."""
    assign = np.empty(n, dtype=np.int64)
    if stratify:
        for cls in (0.0, 1.0):
            idx = np.flatnonzero(y == cls)
            idx = rng.permutation(idx)
            assign[idx] = np.arange(idx.size) % folds
    else:
        assign[rng.permutation(n)] = np.arange(n) % folds
    return assign


def fit_lasso(X, y, lam: float | None = None, family: str = "linear", folds: int = 5,
              path_points: int = 50, path_min_ratio: float = 1e-3, tol: float = 1e-7,
              seed: int = 0) -> FittedLearner:
    """Coordinate-descent lasso fit, optionally with CV lambda selection."""
    if family not in ("linear", "logistic"):
        raise LearnerError(f"unknown family {family!r}")
    values, y, columns = check_xy(X, y)
    logistic = family == "logistic"
    if logistic:
        uniq = np.unique(y)
        if not np.isin(uniq, (0.0, 1.0)).all():
            raise LearnerError("y must be binary 0/1")
        if uniq.size < 2:
            raise LearnerError("single-class y: both classes must be present")
        if not (0.0 < y.mean() < 1.0):
            raise LearnerError("degenerate class balance")

    n = values.shape[0]
    Z, mean, sd, keep = _standardize(values)
    lam_max = float(np.max(np.abs(Z.T @ (y - y.mean())))) / n if Z.shape[1] else 0.0

    if lam is None:
        if lam_max <= 0.0:
            lams = np.array([0.0])
        else:
            lams = np.geomspace(lam_max, path_min_ratio * lam_max, path_points)
        rng = np.random.default_rng(seed)
        assign = _cv_folds(n, folds, y, stratify=logistic, rng=rng)
        cv_loss = np.zeros(len(lams))
        for k in range(folds):
            tr = assign != k
            te = ~tr
            if logistic:
                betas, b0s = _logistic_path(Z[tr], y[tr], lams, tol)
                eta = b0s[None, :] + Z[te] @ betas.T
                prob = np.clip(expit(eta), PROB_EPS, 1.0 - PROB_EPS)
                yk = y[te][:, None]
                cv_loss += -(yk * np.log(prob) + (1.0 - yk) * np.log(1.0 - prob)).mean(axis=0)
            else:
                yc = y[tr] - y[tr].mean()
                betas = _linear_path(Z[tr], yc, lams, tol)
                pred = y[tr].mean() + Z[te] @ betas.T
                cv_loss += ((y[te][:, None] - pred) ** 2).mean(axis=0)
        lam = float(lams[int(np.argmin(cv_loss))])

    lam_path = np.geomspace(lam_max, lam, 12) if 0.0 < lam < lam_max else np.array([lam])
    if logistic:
        betas, b0s = _logistic_path(Z, y, lam_path, tol)
        beta_std, b0 = betas[-1], float(b0s[-1])
    else:
        yc = y - y.mean()
        betas = _linear_path(Z, yc, lam_path, tol)
        beta_std = betas[-1]
        b0 = float(y.mean())

    # back-transform to the original column scale; the free intercept plays the
    # role of the design's constant column (which keeps coefficient 0)
    coef = np.zeros(values.shape[1])
    coef[keep] = beta_std / sd[keep]
    intercept_adj = b0 - float(mean[keep] @ coef[keep])
    params = {
        "coef": coef,
        "intercept": intercept_adj,
        "logistic": logistic,
        "lam": float(lam),
        "lam_max": lam_max,
        "beta_std": beta_std,
        "keep": keep,
    }
    kind = "lasso_logistic" if logistic else "lasso_linear"
    return FittedLearner(
        spec=LearnerSpec(kind, {"lam": float(lam)}),
        task=Task.BINARY_PROBABILITY if logistic else Task.REGRESSION,
        training_columns=columns,
        parameters=params,
        warnings=(),
    )


def _predict_lasso(params, values: np.ndarray) -> np.ndarray:
    eta = params["intercept"] + values @ params["coef"]
    if params["logistic"]:
        return np.clip(expit(eta), PROB_EPS, 1.0 - PROB_EPS)
    return eta


def kkt_residuals(fit: FittedLearner, X, y) -> np.ndarray:
    """|x_j'r/n - lam*sign(beta_j)| on the standardized scale, active coordinates.

    Kept as a diagnostic so tests can assert the stationarity conditions.
    """
    params = fit.parameters
    values, y, _ = check_xy(X, y)
    Z, _, _, keep = _standardize(values)
    beta = params["beta_std"]
    n = Z.shape[0]
    if params["logistic"]:
        eta = params["intercept"] + values @ params["coef"]
        resid = y - expit(eta)
    else:
        resid = y - (params["intercept"] + values @ params["coef"])
    grad = Z.T @ resid / n
    active = np.abs(beta) > 1e-12
    return np.abs(grad[active] - params["lam"] * np.sign(beta[active]))
