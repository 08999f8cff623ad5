"""Ordinary least squares and IRLS logistic regression."""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from drbench.learners.base import (
    PROB_EPS,
    FittedLearner,
    LearnerError,
    LearnerSpec,
    Task,
    check_xy,
)

RIDGE = 1e-8  # fallback penalty on the normalized scale for rank-deficient designs
SEPARATION_BOUND = 30.0  # |standardized coefficient| beyond this flags separation


def _column_scale(values: np.ndarray) -> np.ndarray:
    """Per-column sd with constant columns mapped to scale 1."""
    sd = values.std(axis=0)
    sd[sd < 1e-12] = 1.0
    return sd


def _ridge_solve(values: np.ndarray, y: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    """Least squares with a small ridge penalty applied on the unit-sd scale."""
    scale = _column_scale(values)
    Z = values / scale
    if weights is None:
        G = Z.T @ Z
        c = Z.T @ y
        n_eff = Z.shape[0]
    else:
        Zw = Z * weights[:, None]
        G = Z.T @ Zw
        c = Zw.T @ y
        n_eff = float(weights.sum())
    G[np.diag_indices_from(G)] += RIDGE * n_eff
    return np.linalg.solve(G, c) / scale


def fit_ols(X, y) -> FittedLearner:
    """Least-squares linear regression via SVD, with a ridge fallback.

    Rank-deficient designs are refit with a 1e-8 penalty on the unit-sd
    scale instead of failing, and the fit carries a warning.
    """
    values, y, columns = check_xy(X, y)
    n, p = values.shape
    if n < p:
        raise LearnerError(f"need at least as many rows ({n}) as columns ({p})")
    coef, _, rank, _ = np.linalg.lstsq(values, y, rcond=None)
    warnings: tuple[str, ...] = ()
    if rank < p:
        coef = _ridge_solve(values, y)
        warnings = ("rank-deficient design: ridge fallback engaged",)
    params = {"coef": coef}
    return FittedLearner(
        spec=LearnerSpec("ols"),
        task=Task.REGRESSION,
        training_columns=columns,
        parameters=params,
        warnings=warnings,
    )


def _predict_linear(params, values: np.ndarray) -> np.ndarray:
    return values @ params["coef"]


def logistic_log_likelihood(values: np.ndarray, y: np.ndarray, coef: np.ndarray) -> float:
    eta = values @ coef
    # log(1 + exp(eta)) computed stably
    return float(y @ eta - np.logaddexp(0.0, eta).sum())


def fit_logistic(X, y, tol: float = 1e-8, max_iter: int = 100) -> FittedLearner:
    """Bernoulli MLE by iteratively reweighted least squares.

    Stops when max |coefficient change| < ``tol`` or after ``max_iter``
    iterations. Fits showing separation (|coefficient| > 30 on the unit-sd
    scale) are flagged; their predictions are clamped away from 0/1.
    """
    values, y, columns = check_xy(X, y)
    uniq = np.unique(y)
    if not np.isin(uniq, (0.0, 1.0)).all():
        raise LearnerError("y must be binary 0/1")
    if uniq.size < 2:
        raise LearnerError("single-class y: both classes must be present")

    n, p = values.shape
    scale = _column_scale(values)
    coef = np.zeros(p)
    rank_deficient = np.linalg.matrix_rank(values) < p
    converged = False
    for _ in range(max_iter):
        eta = values @ coef
        prob = expit(eta)
        w = np.clip(prob * (1.0 - prob), 1e-10, None)
        z = eta + (y - prob) / w
        sw = np.sqrt(w)
        if rank_deficient:
            new = _ridge_solve(values, z, weights=w)
        else:
            new, _, _, _ = np.linalg.lstsq(values * sw[:, None], z * sw, rcond=None)
        delta = np.max(np.abs(new - coef))
        coef = new
        if delta < tol:
            converged = True
            break

    warnings: list[str] = []
    if rank_deficient:
        warnings.append("rank-deficient design: ridge fallback engaged")
    if not converged:
        warnings.append("IRLS did not converge")
    separated = bool(np.max(np.abs(coef * scale)) > SEPARATION_BOUND)
    if separated:
        warnings.append("separation detected: probabilities clamped")
    params = {"coef": coef}
    return FittedLearner(
        spec=LearnerSpec("logistic_glm"),
        task=Task.BINARY_PROBABILITY,
        training_columns=columns,
        parameters=params,
        warnings=tuple(warnings),
    )


def _predict_logistic(params, values: np.ndarray) -> np.ndarray:
    return np.clip(expit(values @ params["coef"]), PROB_EPS, 1.0 - PROB_EPS)
