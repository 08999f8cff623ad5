"""Nuisance-function candidate learners."""

from drbench.learners.base import (
    KINDS,
    PROB_EPS,
    FittedLearner,
    LearnerError,
    LearnerSpec,
    Task,
    fit_learner,
    learner_for,
)
from drbench.learners.glm import fit_logistic, fit_ols, logistic_log_likelihood
from drbench.learners.lasso import fit_lasso, kkt_residuals
from drbench.learners.spline import fit_spline, natural_cubic_basis
from drbench.learners.trees import fit_gbt, fit_random_forest

from drbench.learners import glm as _glm
from drbench.learners import lasso as _lasso
from drbench.learners import spline as _spline
from drbench.learners import trees as _trees

# predict dispatch used by FittedLearner.predict
_PREDICTORS = {
    "ols": _glm._predict_linear,
    "logistic_glm": _glm._predict_logistic,
    "lasso_linear": _lasso._predict_lasso,
    "lasso_logistic": _lasso._predict_lasso,
    "spline": _spline._predict_spline,
    "random_forest": _trees._predict_forest,
    "gbt": _trees._predict_gbt,
}

__all__ = [
    "KINDS",
    "PROB_EPS",
    "FittedLearner",
    "LearnerError",
    "LearnerSpec",
    "Task",
    "fit_gbt",
    "fit_lasso",
    "fit_learner",
    "fit_logistic",
    "fit_ols",
    "fit_random_forest",
    "fit_spline",
    "kkt_residuals",
    "learner_for",
    "logistic_log_likelihood",
    "natural_cubic_basis",
]
