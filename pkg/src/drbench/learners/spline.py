"""Additive natural cubic spline learner.

Each continuous column is expanded into a natural cubic spline basis with
interior knots at its 25/50/75% quantiles and boundary knots at the observed
extremes; binary columns stay linear. The expanded basis is fit by OLS or
IRLS logistic regression with the ridge fallback, so collinear expansions
do not fail.
"""

from __future__ import annotations

import numpy as np

from drbench.learners import glm
from drbench.learners.base import (
    FittedLearner,
    LearnerError,
    LearnerSpec,
    Task,
    check_xy,
)


def natural_cubic_basis(x: np.ndarray, knots: np.ndarray) -> np.ndarray:
    """Truncated-power natural cubic spline basis (linear beyond the boundary).

    With K knots the basis has K - 1 columns: x itself plus K - 2 curvature
    terms, each with zero second derivative outside the boundary knots.
    """
    K = len(knots)
    if K < 3:
        return x[:, None]
    t_last = knots[-1]
    t_prev = knots[-2]

    def d(k):
        num = np.clip(x - knots[k], 0.0, None) ** 3 - np.clip(x - t_last, 0.0, None) ** 3
        return num / (t_last - knots[k])

    d_last = d(K - 2)
    cols = [x]
    for k in range(K - 2):
        cols.append(d(k) - d_last)
    return np.column_stack(cols)


def _knots_for(x: np.ndarray, quantiles) -> np.ndarray:
    interior = np.quantile(x, quantiles)
    knots = np.unique(np.concatenate(([x.min()], interior, [x.max()])))
    return knots


def _is_binary(x: np.ndarray) -> bool:
    return bool(np.isin(x, (0.0, 1.0)).all())


def _expand(values: np.ndarray, plan: list[tuple[int, np.ndarray | None]]) -> np.ndarray:
    cols = [np.ones(values.shape[0])]
    for j, knots in plan:
        x = values[:, j]
        if knots is None:
            cols.append(x)
        else:
            cols.append(natural_cubic_basis(x, knots))
    return np.column_stack(cols)


def fit_spline(X, y, family: str = "linear", knot_quantiles=(0.25, 0.5, 0.75)) -> FittedLearner:
    """Fit the additive spline model; requires at least 20 rows."""
    if family not in ("linear", "logistic"):
        raise LearnerError(f"unknown family {family!r}")
    values, y, columns = check_xy(X, y, min_rows=20)

    plan: list[tuple[int, np.ndarray | None]] = []
    for j in range(values.shape[1]):
        x = values[:, j]
        if x.std() < 1e-12:
            continue  # constants are covered by the intercept
        if _is_binary(x):
            plan.append((j, None))
        else:
            plan.append((j, _knots_for(x, knot_quantiles)))

    basis = _expand(values, plan)
    if family == "logistic":
        inner = glm.fit_logistic(basis, y)
    else:
        inner = glm.fit_ols(basis, y)
    params = {"plan": plan, "inner": inner, "logistic": family == "logistic"}
    return FittedLearner(
        spec=LearnerSpec("spline", {"knot_quantiles": tuple(knot_quantiles)}),
        task=inner.task,
        training_columns=columns,
        parameters=params,
        warnings=inner.warnings,
    )


def _predict_spline(params, values: np.ndarray) -> np.ndarray:
    basis = _expand(values, params["plan"])
    return params["inner"].predict(basis)
