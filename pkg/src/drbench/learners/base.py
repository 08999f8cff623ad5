"""Learner specification, fitted-model container, and fit dispatch."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Mapping

import numpy as np

from drbench.formula import DesignMatrix


class Task(enum.Enum):
    REGRESSION = "regression"
    BINARY_PROBABILITY = "binary_probability"


PROB_EPS = 1e-6  # probability clamp so logit transforms stay finite

KINDS = (
    "ols",
    "logistic_glm",
    "lasso_linear",
    "lasso_logistic",
    "spline",
    "random_forest",
    "gbt",
)

_DEFAULTS: dict[str, dict[str, Any]] = {
    "ols": {},
    "logistic_glm": {"tol": 1e-8, "max_iter": 100},
    "lasso_linear": {"lam": None, "folds": 5, "path_points": 50, "path_min_ratio": 1e-3, "tol": 1e-7},
    "lasso_logistic": {"lam": None, "folds": 5, "path_points": 50, "path_min_ratio": 1e-3, "tol": 1e-7},
    "spline": {"knot_quantiles": (0.25, 0.5, 0.75)},
    "random_forest": {"n_trees": 200, "max_depth": 8, "min_leaf": 5, "mtry": None},
    "gbt": {"n_trees": 100, "max_depth": 3, "min_leaf": 5, "learning_rate": 0.1},
}


class LearnerError(ValueError):
    """Invalid learner configuration or unusable training data."""


@dataclass(frozen=True)
class LearnerSpec:
    """A learner kind plus hyperparameters (unset ones take defaults)."""

    kind: str
    hyperparameters: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise LearnerError(f"unknown learner kind {self.kind!r}; expected one of {KINDS}")
        merged = dict(_DEFAULTS[self.kind])
        unknown = set(self.hyperparameters) - set(merged)
        if unknown:
            raise LearnerError(f"unknown hyperparameters for {self.kind}: {sorted(unknown)}")
        merged.update(self.hyperparameters)
        _validate_hyperparameters(self.kind, merged)
        object.__setattr__(self, "hyperparameters", MappingProxyType(merged))

    def __getitem__(self, key: str) -> Any:
        return self.hyperparameters[key]


def _validate_hyperparameters(kind: str, hp: Mapping[str, Any]) -> None:
    if "n_trees" in hp and hp["n_trees"] < 1:
        raise LearnerError("n_trees must be >= 1")
    if "learning_rate" in hp and not (0.0 < hp["learning_rate"] <= 1.0):
        raise LearnerError("learning_rate must be in (0, 1]")
    if "lam" in hp and hp["lam"] is not None and hp["lam"] < 0:
        raise LearnerError("lambda penalty must be >= 0")
    if "max_depth" in hp and hp["max_depth"] < 1:
        raise LearnerError("max_depth must be >= 1")
    if "min_leaf" in hp and hp["min_leaf"] < 1:
        raise LearnerError("min_leaf must be >= 1")
    if "folds" in hp and hp["folds"] < 2:
        raise LearnerError("folds must be >= 2")


@dataclass(frozen=True)
class FittedLearner:
    """Immutable fitted state; ``predict`` is deterministic given the state."""

    spec: LearnerSpec
    task: Task
    training_columns: tuple[str, ...]
    parameters: Any
    warnings: tuple[str, ...] = ()

    def predict(self, X) -> np.ndarray:
        values = _design_values(X, self.training_columns)
        from drbench.learners import _PREDICTORS  # deferred: avoids import cycle

        pred = _PREDICTORS[self.spec.kind](self.parameters, values)
        if self.task is Task.BINARY_PROBABILITY:
            if pred.min() < -1e-9 or pred.max() > 1 + 1e-9:
                raise AssertionError("probability prediction escaped [0, 1]")
            pred = np.clip(pred, 0.0, 1.0)
        return pred


def _design_values(X, expected_columns: tuple[str, ...] | None = None) -> np.ndarray:
    """Extract the dense matrix from a DesignMatrix (or pass an ndarray through)."""
    if isinstance(X, DesignMatrix):
        if expected_columns is not None and X.columns != tuple(expected_columns):
            raise LearnerError(
                f"design columns {X.columns} do not match training columns {tuple(expected_columns)}"
            )
        return X.values
    return np.asarray(X, dtype=float)


def _design_columns(X) -> tuple[str, ...]:
    if isinstance(X, DesignMatrix):
        return X.columns
    return tuple(f"x{j}" for j in range(np.asarray(X).shape[1]))


def check_xy(X, y, *, min_rows: int = 1) -> tuple[np.ndarray, np.ndarray, tuple[str, ...]]:
    values = _design_values(X)
    y = np.asarray(y, dtype=float)
    if values.ndim != 2:
        raise LearnerError("X must be two-dimensional")
    if y.shape != (values.shape[0],):
        raise LearnerError(f"dimension mismatch: X has {values.shape[0]} rows, y has {y.shape}")
    if values.shape[0] < min_rows:
        raise LearnerError(f"need at least {min_rows} rows, got {values.shape[0]}")
    if not np.isfinite(values).all():
        raise LearnerError("non-finite value in X")
    if not np.isfinite(y).all():
        raise LearnerError("non-finite value in y")
    return values, y, _design_columns(X)


def fit_learner(spec: LearnerSpec, X, y, task: Task, seed: int = 0) -> FittedLearner:
    """Fit any learner kind; the task picks the model family where relevant."""
    from drbench.learners import glm, lasso, spline, trees

    kind = spec.kind
    if kind == "ols":
        if task is not Task.REGRESSION:
            raise LearnerError("ols supports regression only")
        return glm.fit_ols(X, y)
    if kind == "logistic_glm":
        if task is not Task.BINARY_PROBABILITY:
            raise LearnerError("logistic_glm supports binary probability only")
        return glm.fit_logistic(X, y, tol=spec["tol"], max_iter=spec["max_iter"])
    family = "logistic" if task is Task.BINARY_PROBABILITY else "linear"
    if kind in ("lasso_linear", "lasso_logistic"):
        want = "logistic" if kind == "lasso_logistic" else "linear"
        if want != family:
            raise LearnerError(f"{kind} does not match task {task.value}")
        return lasso.fit_lasso(X, y, lam=spec["lam"], family=family, folds=spec["folds"],
                               path_points=spec["path_points"], path_min_ratio=spec["path_min_ratio"],
                               tol=spec["tol"], seed=seed)
    if kind == "spline":
        return spline.fit_spline(X, y, family=family, knot_quantiles=spec["knot_quantiles"])
    if kind == "random_forest":
        return trees.fit_random_forest(X, y, family=family, seed=seed,
                                       n_trees=spec["n_trees"], max_depth=spec["max_depth"],
                                       min_leaf=spec["min_leaf"], mtry=spec["mtry"])
    if kind == "gbt":
        return trees.fit_gbt(X, y, family=family, seed=seed,
                             n_trees=spec["n_trees"], max_depth=spec["max_depth"],
                             min_leaf=spec["min_leaf"], learning_rate=spec["learning_rate"])
    raise LearnerError(f"unhandled learner kind {kind!r}")


def learner_for(name: str, task: Task, **hyperparameters) -> LearnerSpec:
    """Map a config-file learner name (glm, lasso, spline, rf, gbt) to a spec."""
    logistic = task is Task.BINARY_PROBABILITY
    table = {
        "glm": "logistic_glm" if logistic else "ols",
        "lasso": "lasso_logistic" if logistic else "lasso_linear",
        "spline": "spline",
        "rf": "random_forest",
        "gbt": "gbt",
    }
    if name not in table:
        raise LearnerError(f"unknown learner name {name!r}; expected one of {sorted(table)}")
    return LearnerSpec(table[name], hyperparameters)
