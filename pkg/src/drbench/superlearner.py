"""Cross-validated convex stacking of candidate learners.

V-fold cross-validation produces an out-of-fold prediction matrix; ensemble
weights minimize the task loss over the probability simplex. Squared-error
weights start from non-negative least squares (then normalization) and
log-loss weights from the best single candidate; both are polished by
projected gradient descent so the stacked cross-validated risk never
exceeds the best single candidate's.
"""

from __future__ import annotations

import warnings as _warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.optimize import nnls

from drbench.formula import DesignMatrix
from drbench.learners import (
    PROB_EPS,
    FittedLearner,
    LearnerError,
    LearnerSpec,
    Task,
    fit_learner,
    learner_for,
)
from drbench.learners.base import _design_values

# learner-name groups selectable in configs
LIBRARY_GROUPS = {
    "glm": ("glm",),
    "smooth": ("glm", "lasso", "spline"),
    "nonsmooth": ("gbt", "rf"),
    "both": ("glm", "lasso", "spline", "gbt", "rf"),
}

SQUARED_ERROR = "squared_error"
LOG_LOSS = "log_loss"


@dataclass(frozen=True)
class EnsembleSpec:
    """Candidate list plus cross-validation folds and meta-learning loss."""

    candidates: tuple[LearnerSpec, ...]
    folds: int = 5
    loss: Optional[str] = None  # defaults to the task's natural loss

    def __post_init__(self):
        if not self.candidates:
            raise LearnerError("candidate list must be non-empty")
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if self.folds < 2:
            raise LearnerError("folds must be >= 2")
        if self.loss is not None and self.loss not in (SQUARED_ERROR, LOG_LOSS):
            raise LearnerError(f"unknown loss {self.loss!r}")


@dataclass(frozen=True)
class FittedEnsemble:
    spec: EnsembleSpec
    task: Task
    weights: np.ndarray
    refit_candidates: tuple[Optional[FittedLearner], ...]
    cv_risk: np.ndarray
    cv_risk_ensemble: float
    training_columns: tuple[str, ...]
    warnings: tuple[str, ...] = ()

    def predict(self, X) -> np.ndarray:
        return predict_ensemble(self, X)


def ensemble_for(group: str, task: Task, folds: int = 5, **hyper) -> EnsembleSpec:
    """Build an EnsembleSpec from a library-group name (glm/smooth/nonsmooth/both)."""
    if group not in LIBRARY_GROUPS:
        raise LearnerError(f"unknown library group {group!r}; expected one of {sorted(LIBRARY_GROUPS)}")
    cands = tuple(learner_for(name, task, **hyper.get(name, {})) for name in LIBRARY_GROUPS[group])
    return EnsembleSpec(candidates=cands, folds=folds)


def _loss_for(task: Task, requested: Optional[str]) -> str:
    if requested is not None:
        return requested
    return LOG_LOSS if task is Task.BINARY_PROBABILITY else SQUARED_ERROR


def _loss_value(loss: str, y: np.ndarray, pred: np.ndarray) -> float:
    if loss == LOG_LOSS:
        q = np.clip(pred, PROB_EPS, 1.0 - PROB_EPS)
        return float(-(y * np.log(q) + (1.0 - y) * np.log(1.0 - q)).mean())
    return float(((y - pred) ** 2).mean())


def _loss_gradient(loss: str, y: np.ndarray, Z: np.ndarray, w: np.ndarray) -> np.ndarray:
    pred = Z @ w
    n = len(y)
    if loss == LOG_LOSS:
        q = np.clip(pred, PROB_EPS, 1.0 - PROB_EPS)
        return Z.T @ ((q - y) / (q * (1.0 - q))) / n
    return 2.0 * Z.T @ (pred - y) / n


def _project_simplex(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    ks = np.arange(1, len(v) + 1)
    rho = np.nonzero(u * ks > (css - 1.0))[0][-1]
    theta = (css[rho] - 1.0) / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def solve_simplex_weights(Z: np.ndarray, y: np.ndarray, loss: str,
                          max_iter: int = 500, tol: float = 1e-8) -> np.ndarray:
    """Minimize loss(y, Z @ w) over the probability simplex."""
    n, k = Z.shape
    if k == 1:
        return np.ones(1)

    vertex_losses = np.array([_loss_value(loss, y, Z[:, j]) for j in range(k)])
    best_vertex = np.zeros(k)
    best_vertex[int(np.argmin(vertex_losses))] = 1.0

    if loss == SQUARED_ERROR:
        coef, _ = nnls(Z, y)
        total = coef.sum()
        start = coef / total if total > 0 else best_vertex
    else:
        start = np.full(k, 1.0 / k)
    if _loss_value(loss, y, Z @ best_vertex) < _loss_value(loss, y, Z @ start):
        start = best_vertex

    w = start
    f = _loss_value(loss, y, Z @ w)
    step = 1.0
    for _ in range(max_iter):
        g = _loss_gradient(loss, y, Z, w)
        improved = False
        while step >= 1e-14:
            cand = _project_simplex(w - step * g)
            f_cand = _loss_value(loss, y, Z @ cand)
            if f_cand < f - 1e-15:
                delta = np.max(np.abs(cand - w))
                w, f = cand, f_cand
                improved = True
                step *= 1.5
                if delta < tol:
                    return w
                break
            step *= 0.5
        if not improved:
            break
    return w


def _fold_assignments(n: int, folds: int, y: np.ndarray, stratify: bool,
                      rng: np.random.Generator) -> np.ndarray:
    assign = np.empty(n, dtype=np.int64)
    if stratify:
        for cls in np.unique(y):
            idx = rng.permutation(np.flatnonzero(y == cls))
            assign[idx] = np.arange(idx.size) % folds
    else:
        assign[rng.permutation(n)] = np.arange(n) % folds
    return assign


def fit_superlearner(spec: EnsembleSpec, X, y, task: Task, seed: int = 0) -> FittedEnsemble:
    """Fit the stacked ensemble. Candidates that fail get weight zero."""
    values = _design_values(X)
    y = np.asarray(y, dtype=float)
    n = values.shape[0]
    if spec.folds > n:
        raise LearnerError(f"folds ({spec.folds}) exceed rows ({n})")
    columns = X.columns if isinstance(X, DesignMatrix) else tuple(f"x{j}" for j in range(values.shape[1]))

    stratify = task is Task.BINARY_PROBABILITY
    if stratify:
        counts = np.unique(y, return_counts=True)[1]
        if counts.min() < spec.folds:
            raise LearnerError("cannot build stratified folds: a class has fewer members than folds")
    rng = np.random.default_rng(seed)
    assign = _fold_assignments(n, spec.folds, y, stratify, rng)

    K = len(spec.candidates)
    Z = np.full((n, K), np.nan)
    failed = np.zeros(K, dtype=bool)
    notes: list[str] = []
    # canonical (candidate, fold) order keeps weight fitting deterministic
    for j, cand in enumerate(spec.candidates):
        for k in range(spec.folds):
            tr = assign != k
            sub = DesignMatrix(columns, values[tr])
            try:
                fit = fit_learner(cand, sub, y[tr], task, seed=_derive_seed(seed, j, k))
                Z[~tr, j] = fit.predict(DesignMatrix(columns, values[~tr]))
            except (LearnerError, np.linalg.LinAlgError) as exc:
                failed[j] = True
                notes.append(f"candidate {cand.kind} failed in fold {k}: {exc}")
                break
    if failed.all():
        raise LearnerError("all ensemble candidates failed")
    if failed.any():
        _warnings.warn("; ".join(notes), stacklevel=2)

    loss = _loss_for(task, spec.loss)
    ok = ~failed
    cv_risk = np.full(K, np.inf)
    for j in np.flatnonzero(ok):
        cv_risk[j] = _loss_value(loss, y, Z[:, j])

    weights = np.zeros(K)
    weights[ok] = solve_simplex_weights(Z[:, ok], y, loss)
    stacked_risk = _loss_value(loss, y, Z[:, ok] @ weights[ok])

    # refit every surviving candidate on the full data (weight-zero candidates
    # included: weights are part of the fitted state, predictions are not)
    refits: list[Optional[FittedLearner]] = []
    for j, cand in enumerate(spec.candidates):
        if failed[j]:
            refits.append(None)
            continue
        try:
            refits.append(fit_learner(cand, X if isinstance(X, DesignMatrix) else DesignMatrix(columns, values),
                                      y, task, seed=_derive_seed(seed, j, spec.folds)))
        except (LearnerError, np.linalg.LinAlgError) as exc:
            refits.append(None)
            failed[j] = True
            weights[j] = 0.0
            _warnings.warn(f"candidate {cand.kind} failed on refit: {exc}", stacklevel=2)
    if all(r is None for r in refits):
        raise LearnerError("all ensemble candidates failed")
    total = weights.sum()
    if total <= 0:
        # degenerate: fall back to the best surviving candidate
        j = int(np.argmin(np.where([r is not None for r in refits], cv_risk, np.inf)))
        weights = np.zeros(K)
        weights[j] = 1.0
    else:
        weights = weights / total

    return FittedEnsemble(
        spec=spec,
        task=task,
        weights=weights,
        refit_candidates=tuple(refits),
        cv_risk=cv_risk,
        cv_risk_ensemble=stacked_risk,
        training_columns=columns,
        warnings=tuple(notes),
    )


def predict_ensemble(fit: FittedEnsemble, X) -> np.ndarray:
    """Weighted candidate prediction, clamped to [0, 1] for probabilities."""
    values = _design_values(X)
    if isinstance(X, DesignMatrix) and X.columns != fit.training_columns:
        raise LearnerError("design columns do not match ensemble training columns")
    out = np.zeros(values.shape[0])
    for w, cand in zip(fit.weights, fit.refit_candidates):
        if w == 0.0 or cand is None:
            continue
        out += w * cand.predict(DesignMatrix(fit.training_columns, values))
    if fit.task is Task.BINARY_PROBABILITY:
        out = np.clip(out, 0.0, 1.0)
    return out


def _derive_seed(seed: int, *path: int) -> int:
    ss = np.random.SeedSequence([int(seed) & 0x7FFFFFFF, *[int(p) for p in path]])
    return int(ss.generate_state(1)[0])
