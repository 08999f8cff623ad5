"""Doubly-robust average-treatment-effect estimation and benchmarking.

The package provides:

* an R-style model formula parser and design-matrix builder (``formula``),
* from-scratch nuisance learners: GLMs, lasso, splines, tree ensembles
  (``learners``),
* cross-validated convex stacking of learners (``superlearner``),
* ATE estimators with influence-function standard errors: IPW,
  g-computation, AIPW, TMLE (``estimators``),
* double cross-fit orchestration (``crossfit``),
* synthetic data generators, including a plasmode engine that re-uses real
  covariate structure (``plasmode``, ``presets``),
* a replicated-simulation benchmark harness (``bench``) and a CLI (``cli``).
"""

from drbench.data import Dataset, load_csv
from drbench.formula import DesignMatrix, FormulaSpec, Term, build_design, parse_formula, render_formula
from drbench.estimators import (
    AteEstimate,
    NuisanceFit,
    estimate_aipw,
    estimate_gcomp,
    estimate_iptw,
    estimate_tmle,
    fit_nuisance,
)
from drbench.crossfit import SplitPlan, dc_estimate, make_split_plan
from drbench.superlearner import EnsembleSpec, FittedEnsemble, fit_superlearner, predict_ensemble
from drbench.learners import LearnerSpec

__version__ = "0.1.0"

__all__ = [
    "AteEstimate",
    "Dataset",
    "DesignMatrix",
    "EnsembleSpec",
    "FittedEnsemble",
    "FormulaSpec",
    "LearnerSpec",
    "NuisanceFit",
    "SplitPlan",
    "Term",
    "build_design",
    "dc_estimate",
    "estimate_aipw",
    "estimate_gcomp",
    "estimate_iptw",
    "estimate_tmle",
    "fit_nuisance",
    "fit_superlearner",
    "load_csv",
    "make_split_plan",
    "parse_formula",
    "predict_ensemble",
    "render_formula",
    "__version__",
]
