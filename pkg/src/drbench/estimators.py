"""Average-treatment-effect estimators over supplied nuisance fits.

Four estimators are provided. IPW reweights outcomes by inverse propensity
(optionally stabilized by treatment prevalence, with pooled 5th/95th
percentile weight truncation) and takes the difference of weighted arm
means. g-computation averages counterfactual outcome-model predictions.
AIPW augments g-computation with the propensity-based one-step correction.
TMLE fluctuates the outcome predictions along the clever covariate
H(A, W) = A/g - (1-A)/(1-g) via a one-parameter logistic submodel fitted by
Newton iterations on the [0, 1]-scaled outcome.

All standard errors come from per-unit influence contributions
(sd / sqrt(n)), except g-computation, which uses the nonparametric
percentile bootstrap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Union

import numpy as np
from scipy.special import expit, logit

from drbench.data import Dataset
from drbench.formula import FormulaSpec, build_design
from drbench.learners import FittedLearner, LearnerError, LearnerSpec, Task, fit_learner
from drbench.superlearner import EnsembleSpec, FittedEnsemble, fit_superlearner

Z95 = 1.96  # 95% Wald multiplier
DEFAULT_G_BOUNDS = (0.01, 0.99)
OM_SCALE_CLAMP = 0.005  # clamp on [0,1]-scaled outcome predictions before logit


class EstimationError(RuntimeError):
    """Estimator preconditions violated or a nuisance fit failed."""


@dataclass(frozen=True)
class NuisanceFit:
    """Propensity and counterfactual outcome predictions on a target sample."""

    g_hat: np.ndarray
    m0_hat: np.ndarray
    m1_hat: np.ndarray
    bounds_applied: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        g = np.asarray(self.g_hat, dtype=float)
        m0 = np.asarray(self.m0_hat, dtype=float)
        m1 = np.asarray(self.m1_hat, dtype=float)
        if not (g.shape == m0.shape == m1.shape):
            raise EstimationError("nuisance vectors must share a length")
        if not (np.isfinite(g).all() and np.isfinite(m0).all() and np.isfinite(m1).all()):
            raise EstimationError("non-finite nuisance prediction")
        if g.min() <= 0.0 or g.max() >= 1.0:
            raise EstimationError("g_hat must lie strictly inside (0, 1); apply bounding first")
        object.__setattr__(self, "g_hat", g)
        object.__setattr__(self, "m0_hat", m0)
        object.__setattr__(self, "m1_hat", m1)


@dataclass(frozen=True)
class AteEstimate:
    """Point estimate, influence-based SE and 95% Wald interval."""

    psi: float
    se: float
    ci_lo: float
    ci_hi: float
    estimator: str
    n: int
    diagnostics: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.se < 0:
            raise EstimationError("standard error must be non-negative")
        if not (self.ci_lo <= self.psi <= self.ci_hi):
            raise EstimationError("confidence interval must contain the point estimate")

    def covers(self, value: float) -> bool:
        return self.ci_lo <= value <= self.ci_hi


def _wald(psi: float, se: float, estimator: str, n: int, diagnostics: Mapping) -> AteEstimate:
    return AteEstimate(
        psi=float(psi),
        se=float(se),
        ci_lo=float(psi - Z95 * se),
        ci_hi=float(psi + Z95 * se),
        estimator=estimator,
        n=n,
        diagnostics=dict(diagnostics),
    )


def _check_arms(A: np.ndarray) -> None:
    if A.sum() == 0 or A.sum() == len(A):
        raise EstimationError("need both treated and control observations")


def estimate_iptw(data: Dataset, g_hat: np.ndarray, stabilize: bool = True,
                  truncate_pct: float = 0.05) -> AteEstimate:
    """Inverse-probability-weighted difference of weighted arm means."""
    A, Y = data.treatment, data.outcome
    g = np.asarray(g_hat, dtype=float)
    if g.shape != A.shape:
        raise EstimationError("g_hat length does not match the data")
    _check_arms(A)
    if not (0.0 <= truncate_pct < 0.5):
        raise EstimationError("truncate_pct must be in [0, 0.5)")

    w = np.where(A == 1.0, 1.0 / g, 1.0 / (1.0 - g))
    if stabilize:
        prev = data.prevalence
        w = np.where(A == 1.0, prev * w, (1.0 - prev) * w)
    raw_lo, raw_hi = float(w.min()), float(w.max())
    if truncate_pct > 0.0:
        lo, hi = np.quantile(w, [truncate_pct, 1.0 - truncate_pct])
        w = np.clip(w, lo, hi)
    n = data.n
    sw_t = float((A * w).sum())
    sw_c = float(((1.0 - A) * w).sum())
    mu1 = float((A * w * Y).sum() / sw_t)
    mu0 = float(((1.0 - A) * w * Y).sum() / sw_c)
    psi = mu1 - mu0

    # arm-normalized weights keep the influence contributions on the 1/n scale
    infl = A * w * (Y - mu1) / (sw_t / n) - (1.0 - A) * w * (Y - mu0) / (sw_c / n)
    se = float(np.sqrt((infl ** 2).mean() / n))
    diag = {
        "weight_min": raw_lo,
        "weight_max": raw_hi,
        "weight_min_truncated": float(w.min()),
        "weight_max_truncated": float(w.max()),
        "stabilized": float(stabilize),
        "truncate_pct": float(truncate_pct),
        "if_variance": float((infl ** 2).mean()),
    }
    return _wald(psi, se, "ipw", n, diag)


def estimate_gcomp(data: Dataset, m0_hat: np.ndarray, m1_hat: np.ndarray,
                   refit: Optional[Callable[[Dataset], tuple[np.ndarray, np.ndarray]]] = None,
                   bootstrap_reps: int = 200, seed: int = 0) -> AteEstimate:
    """Plug-in g-formula estimate with percentile-bootstrap intervals.

    ``refit`` re-estimates the outcome model on a resampled dataset and
    returns its (m0, m1) predictions there; without it the bootstrap
    resamples the fixed plug-in predictions, understating refit variability.
    """
    m0 = np.asarray(m0_hat, dtype=float)
    m1 = np.asarray(m1_hat, dtype=float)
    if m0.shape != (data.n,) or m1.shape != (data.n,):
        raise EstimationError("prediction vectors must match the data length")
    psi = float(m1.mean() - m0.mean())

    rng = np.random.default_rng(seed)
    boots = np.empty(bootstrap_reps)
    for b in range(bootstrap_reps):
        idx = rng.integers(0, data.n, data.n)
        if refit is None:
            boots[b] = float((m1[idx] - m0[idx]).mean())
        else:
            m0b, m1b = refit(data.subset(idx))
            boots[b] = float(np.mean(m1b) - np.mean(m0b))
    se = float(boots.std(ddof=1))
    ci_lo, ci_hi = np.quantile(boots, [0.025, 0.975])
    widened = bool(ci_lo > psi or ci_hi < psi)
    diag = {"bootstrap_reps": float(bootstrap_reps), "refit": float(refit is not None),
            "ci_widened": float(widened)}
    return AteEstimate(
        psi=psi,
        se=se,
        ci_lo=float(min(ci_lo, psi)),
        ci_hi=float(max(ci_hi, psi)),
        estimator="gcomp",
        n=data.n,
        diagnostics=diag,
    )


def estimate_aipw(data: Dataset, nuisance: NuisanceFit) -> AteEstimate:
    """One-step corrected (augmented IPW) estimate with influence-based SE."""
    A, Y = data.treatment, data.outcome
    g, m0, m1 = nuisance.g_hat, nuisance.m0_hat, nuisance.m1_hat
    if g.shape != A.shape:
        raise EstimationError("nuisance length does not match the data")
    treated = A * Y / g - (A - g) / g * m1
    control = (1.0 - A) * Y / (1.0 - g) + (A - g) / (1.0 - g) * m0
    contrib = treated - control
    psi = float(contrib.mean())
    infl = contrib - psi
    se = float(np.sqrt((infl ** 2).mean() / data.n))
    diag = dict(nuisance.bounds_applied)
    diag["if_variance"] = float((infl ** 2).mean())
    return _wald(psi, se, "aipw", data.n, diag)


def tmle_fluctuation_score(eps: float, H: np.ndarray, y_scaled: np.ndarray,
                           offset_logit: np.ndarray) -> float:
    """Score of the one-parameter logistic submodel at fluctuation ``eps``."""
    return float((H * (y_scaled - expit(offset_logit + eps * H))).sum())


def estimate_tmle(data: Dataset, nuisance: NuisanceFit) -> AteEstimate:
    """Targeted-maximum-likelihood estimate with influence-based SE."""
    A, Y = data.treatment, data.outcome
    g, m0, m1 = nuisance.g_hat, nuisance.m0_hat, nuisance.m1_hat
    if g.shape != A.shape:
        raise EstimationError("nuisance length does not match the data")
    y_min, y_max = float(Y.min()), float(Y.max())
    if y_max <= y_min:
        raise EstimationError("degenerate outcome: y_max equals y_min")
    scale = y_max - y_min
    ys = (Y - y_min) / scale
    m0s = np.clip((m0 - y_min) / scale, OM_SCALE_CLAMP, 1.0 - OM_SCALE_CLAMP)
    m1s = np.clip((m1 - y_min) / scale, OM_SCALE_CLAMP, 1.0 - OM_SCALE_CLAMP)
    clamped = int(((m0 - y_min) / scale != m0s).sum() + ((m1 - y_min) / scale != m1s).sum())

    H1 = 1.0 / g
    H0 = -1.0 / (1.0 - g)
    H = np.where(A == 1.0, H1, H0)
    offset = logit(np.where(A == 1.0, m1s, m0s))

    eps = 0.0
    converged = False
    iterations = 0
    for iterations in range(1, 101):
        p = expit(offset + eps * H)
        score = float((H * (ys - p)).sum())
        curv = float((H * H * p * (1.0 - p)).sum())
        if curv <= 0.0:
            break
        step = score / curv
        eps += step
        if abs(step) < 1e-10:
            converged = True
            break
    if not converged:
        eps = 0.0  # fall back to the unfluctuated fit

    m1s_star = expit(logit(m1s) + eps * H1)
    m0s_star = expit(logit(m0s) + eps * H0)
    psi = float((m1s_star - m0s_star).mean() * scale)

    m1_star = m1s_star * scale + y_min
    m0_star = m0s_star * scale + y_min
    m_obs = np.where(A == 1.0, m1_star, m0_star)
    infl = H * (Y - m_obs) + (m1_star - m0_star) - psi
    se = float(np.sqrt((infl ** 2).mean() / data.n))
    diag = dict(nuisance.bounds_applied)
    diag.update({
        "epsilon": float(eps),
        "newton_converged": float(converged),
        "newton_iterations": float(iterations),
        "om_scale_clamped": float(clamped),
        "if_variance": float((infl ** 2).mean()),
    })
    return _wald(psi, se, "tmle", data.n, diag)


# ---------------------------------------------------------------------------
# nuisance fitting

LearnerOrEnsemble = Union[LearnerSpec, EnsembleSpec]


@dataclass(frozen=True)
class PropensityModel:
    """Fitted treatment model, predicting P(A=1 | W) on any dataset."""

    formula: FormulaSpec
    model: Union[FittedLearner, FittedEnsemble]

    def predict(self, data: Dataset) -> np.ndarray:
        X = build_design(self.formula, data)
        return self.model.predict(X)


@dataclass(frozen=True)
class OutcomeModel:
    """Fitted outcome model, predicting E[Y | A=a, W] at a chosen level."""

    formula: FormulaSpec
    model: Union[FittedLearner, FittedEnsemble]

    def predict(self, data: Dataset, treatment: Optional[int] = None) -> np.ndarray:
        X = build_design(self.formula, data, treatment_override=treatment)
        return self.model.predict(X)


def _fit_any(learner: LearnerOrEnsemble, X, y, task: Task, seed: int):
    if isinstance(learner, EnsembleSpec):
        return fit_superlearner(learner, X, y, task, seed=seed)
    if isinstance(learner, LearnerSpec):
        return fit_learner(learner, X, y, task, seed=seed)
    raise EstimationError(f"expected LearnerSpec or EnsembleSpec, got {type(learner).__name__}")


def fit_propensity_model(data: Dataset, ps_formula: FormulaSpec,
                         learner: LearnerOrEnsemble, seed: int = 0) -> PropensityModel:
    spec = ps_formula
    if spec.response is not None and spec.response != data.treatment_name:
        raise EstimationError(
            f"propensity formula response {spec.response!r} is not the treatment column"
        )
    if data.treatment_name in spec.variables:
        raise EstimationError("propensity formula must not use the treatment as a predictor")
    X = build_design(spec, data)
    try:
        model = _fit_any(learner, X, data.treatment, Task.BINARY_PROBABILITY, seed)
    except (LearnerError, np.linalg.LinAlgError) as exc:
        raise EstimationError(f"propensity fit failed: {exc}") from exc
    return PropensityModel(formula=spec, model=model)


def fit_outcome_model(data: Dataset, om_formula: FormulaSpec,
                      learner: LearnerOrEnsemble, seed: int = 0) -> OutcomeModel:
    spec = om_formula
    if spec.response is not None and spec.response != data.outcome_name:
        raise EstimationError(
            f"outcome formula response {spec.response!r} is not the outcome column"
        )
    if spec.treatment is None:
        spec = spec.with_treatment(data.treatment_name)
    mains = {t.variables[0] for t in spec.main_effects}
    if spec.treatment not in mains:
        raise EstimationError("outcome formula must include the treatment main effect")
    X = build_design(spec, data)
    try:
        model = _fit_any(learner, X, data.outcome, Task.REGRESSION, seed)
    except (LearnerError, np.linalg.LinAlgError) as exc:
        raise EstimationError(f"outcome fit failed: {exc}") from exc
    return OutcomeModel(formula=spec, model=model)


def bound_propensity(g_raw: np.ndarray, bounds: tuple[float, float] = DEFAULT_G_BOUNDS
                     ) -> tuple[np.ndarray, dict]:
    g_lo, g_hi = bounds
    g = np.clip(g_raw, g_lo, g_hi)
    record = {
        "g_lo": float(g_lo),
        "g_hi": float(g_hi),
        "g_clamped_lo": float((g_raw < g_lo).sum()),
        "g_clamped_hi": float((g_raw > g_hi).sum()),
    }
    return g, record


def fit_nuisance(data: Dataset, ps_formula: FormulaSpec, om_formula: FormulaSpec,
                 ps_learner: LearnerOrEnsemble, om_learner: LearnerOrEnsemble,
                 target: Optional[Dataset] = None, seed: int = 0,
                 g_bounds: tuple[float, float] = DEFAULT_G_BOUNDS) -> NuisanceFit:
    """Fit both nuisance functions on ``data`` and predict on ``target``.

    ``target`` defaults to ``data`` (the singly-fit case); cross-fitting
    passes a disjoint evaluation split. Propensities are bounded into
    ``g_bounds`` and the clamp counts recorded.
    """
    if target is None:
        target = data
    ss = np.random.SeedSequence([int(seed) & 0x7FFFFFFF])
    ps_seed, om_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
    ps = fit_propensity_model(data, ps_formula, ps_learner, seed=ps_seed)
    om = fit_outcome_model(data, om_formula, om_learner, seed=om_seed)
    g, record = bound_propensity(ps.predict(target), g_bounds)
    m0 = om.predict(target, treatment=0)
    m1 = om.predict(target, treatment=1)
    return NuisanceFit(g_hat=g, m0_hat=m0, m1_hat=m1, bounds_applied=record)
