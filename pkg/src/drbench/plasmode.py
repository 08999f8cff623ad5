"""Synthetic data generation with known treatment effects.

Two engines live here. ``generate_kang_schafer`` draws the classic hard
benchmark process: five entangled confounders, a logistic treatment, and a
strongly non-linear outcome with an additive effect of 6.6. The plasmode
engine re-uses the covariate rows of a source dataset: it fits (or takes
preset) treatment and outcome models, pins the treatment coefficient to the
desired effect, recalibrates the treatment-model intercept so the expected
prevalence matches the source, and generates outcomes by resampling the
fitted model's residuals.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
from scipy.special import expit

from drbench.data import Dataset
from drbench.formula import INTERCEPT, FormulaSpec, build_design
from drbench.learners import fit_logistic, fit_ols

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SyntheticDraw:
    """One simulated dataset plus its potential outcomes."""

    dataset: Dataset
    y0: np.ndarray
    y1: np.ndarray
    true_ate_marginal: float
    info: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        y0 = np.asarray(self.y0, dtype=float)
        y1 = np.asarray(self.y1, dtype=float)
        A = self.dataset.treatment
        expected = np.where(A == 1.0, y1, y0)
        if not np.array_equal(self.dataset.outcome, expected):
            raise ValueError("consistency violated: Y must equal A*y1 + (1-A)*y0")
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "y1", y1)


def generate_kang_schafer(n: int, seed: int) -> SyntheticDraw:
    """Draw the five-confounder hard benchmark process with effect 6.6.

    Normal second parameters are variances (N(0, 4^2) has standard
    deviation 4). The outcome involves log(W5), so rows with W5 <= 0 are
    redrawn wholesale; the redraw fraction is reported in ``info``.
    """
    if n < 50:
        raise ValueError(f"need n >= 50, got {n}")
    rng = np.random.default_rng(seed)
    cols = np.empty((n, 5))
    filled = 0
    total_drawn = 0
    while filled < n:
        m = max(n - filled, 64)
        W1 = rng.normal(0.0, 1.0, m)
        W2 = rng.normal(W1 + 2.0, np.sqrt(2.0))
        W3 = rng.normal(2.0, np.sqrt(np.abs(2.0 * W2)))
        W4 = rng.normal(W2 ** 2 + 2.0 * W3, np.sqrt(np.abs(W1)))
        W5 = rng.normal(W3 * W4, np.sqrt(np.abs(W2 - W1)))
        total_drawn += m
        ok = W5 > 0.0
        take = min(int(ok.sum()), n - filled)
        sel = np.flatnonzero(ok)[:take]
        cols[filled:filled + take] = np.column_stack([W1, W2, W3, W4, W5])[sel]
        filled += take
    W1, W2, W3, W4, W5 = cols.T

    p = expit(W1 + W2 / 20.0 + W3 / 50.0 + W4 / 200.0 + W5 / 5000.0)
    A = (rng.random(n) < p).astype(float)
    noise = rng.normal(0.0, 4.0, n)
    y0 = 10.0 * W1 + 0.5 * W2 ** 2 + 0.66 * W3 + 0.25 * W4 + 0.01 * W3 * W4 + 8.0 * np.log(W5) + noise
    y1 = y0 + 6.6
    Y = np.where(A == 1.0, y1, y0)

    redraw_fraction = 1.0 - n / total_drawn
    logger.debug("kang-schafer: redrew %.1f%% of candidate rows", 100 * redraw_fraction)
    dataset = Dataset(
        covariates=cols,
        covariate_names=("W1", "W2", "W3", "W4", "W5"),
        treatment=A,
        outcome=Y,
    )
    return SyntheticDraw(dataset=dataset, y0=y0, y1=y1, true_ate_marginal=6.6,
                         info={"redraw_fraction": redraw_fraction})


@dataclass(frozen=True)
class KangSchaferGenerator:
    """Replicate source for the benchmark harness."""

    n: int = 600

    def draw(self, seed: int) -> SyntheticDraw:
        return generate_kang_schafer(self.n, seed)

    @property
    def true_ate(self) -> float:
        return 6.6


@dataclass(frozen=True)
class ScenarioSpec:
    """Data-generating models for one plasmode scenario."""

    name: str
    om_formula: FormulaSpec
    ps_formula: FormulaSpec
    true_ate: float
    interaction_inflation: float = 1.0
    covariate_subset: Optional[tuple[int, ...]] = None
    preset_coefficients: Optional[tuple[Mapping[str, float], Mapping[str, float]]] = None

    def __post_init__(self):
        if self.om_formula.treatment is None:
            raise ValueError("scenario outcome formula must flag the treatment variable")
        mains = {t.variables[0] for t in self.om_formula.main_effects}
        if self.om_formula.treatment not in mains:
            raise ValueError("scenario outcome formula must include the treatment main effect")
        if self.preset_coefficients is not None:
            om_coefs = _canonical_table(self.preset_coefficients[0])
            ps_coefs = _canonical_table(self.preset_coefficients[1])
            om_labels = {INTERCEPT, *(t.label for t in self.om_formula.terms)}
            ps_labels = {INTERCEPT, *(t.label for t in self.ps_formula.terms)}
            bad_om = set(om_coefs) - om_labels
            bad_ps = set(ps_coefs) - ps_labels
            if bad_om or bad_ps:
                raise ValueError(f"preset coefficient names not in the formulas: {sorted(bad_om | bad_ps)}")
            object.__setattr__(self, "preset_coefficients", (om_coefs, ps_coefs))


@dataclass(frozen=True)
class PlasmodeGenerator:
    """Frozen data-generating mechanism built from a source dataset."""

    source: Dataset
    scenario: ScenarioSpec
    ps_coef: np.ndarray
    ps_delta: float
    om_coef: np.ndarray
    residuals: np.ndarray
    target_prevalence: float

    def draw(self, seed: int) -> SyntheticDraw:
        return draw_plasmode(self, seed)

    @property
    def om_columns(self) -> tuple[str, ...]:
        return build_design(self.scenario.om_formula, self.source).columns

    def treatment_effect_per_row(self, data: Dataset) -> np.ndarray:
        """y1 - y0 for each row; residuals cancel in the difference."""
        X1 = build_design(self.scenario.om_formula, data, treatment_override=1).values
        X0 = build_design(self.scenario.om_formula, data, treatment_override=0).values
        return (X1 - X0) @ self.om_coef


def _canonical_table(table: Mapping[str, float]) -> dict[str, float]:
    """Rewrite interaction keys into canonical operand order (A:B with A < B)."""
    out: dict[str, float] = {}
    for key, value in table.items():
        if ":" in key:
            a, b = key.split(":", 1)
            key = ":".join(sorted((a, b)))
        out[key] = float(value)
    return out


def _coef_vector(columns: tuple[str, ...], table: Mapping[str, float]) -> np.ndarray:
    try:
        return np.array([float(table[c]) for c in columns])
    except KeyError as exc:
        raise ValueError(f"preset table is missing a coefficient for column {exc.args[0]!r}") from None


def make_plasmode_generator(source: Dataset, scenario: ScenarioSpec, seed: int = 0) -> PlasmodeGenerator:
    """Fit (or load) the scenario models on the source and freeze the DGP.

    Steps: fit the treatment model and outcome model on the source data;
    pin the outcome model's treatment coefficient to ``scenario.true_ate``;
    scale treatment-covariate interaction coefficients by
    ``interaction_inflation``; store the outcome-model residuals; and solve
    (by bisection) for the intercept offset that makes the mean assignment
    probability equal the observed prevalence.
    """
    om_spec = scenario.om_formula
    ps_spec = scenario.ps_formula
    X_om = build_design(om_spec, source)
    X_ps = build_design(ps_spec, source)

    om_fit = fit_ols(X_om, source.outcome)
    fitted_om_coef = om_fit.parameters["coef"]
    residuals = source.outcome - X_om.values @ fitted_om_coef

    if scenario.preset_coefficients is not None:
        om_table, ps_table = scenario.preset_coefficients
        om_coef = _coef_vector(X_om.columns, {**om_table, om_spec.treatment: scenario.true_ate})
        ps_coef = _coef_vector(X_ps.columns, ps_table)
    else:
        om_coef = fitted_om_coef.copy()
        ps_coef = fit_logistic(X_ps, source.treatment).parameters["coef"]

    a_name = om_spec.treatment
    om_coef = om_coef.copy()
    for j, label in enumerate(X_om.columns):
        if label == a_name:
            om_coef[j] = scenario.true_ate
        elif ":" in label and a_name in label.split(":"):
            om_coef[j] *= scenario.interaction_inflation

    prevalence = source.prevalence
    eta = X_ps.values @ ps_coef

    def gap(delta: float) -> float:
        return float(expit(eta + delta).mean() - prevalence)

    lo, hi = -20.0, 20.0
    if gap(lo) > 0.0 or gap(hi) < 0.0:
        raise ValueError("prevalence calibration failed: bisection bracket does not contain a root")
    delta = 0.0
    for _ in range(200):
        delta = 0.5 * (lo + hi)
        g = gap(delta)
        if abs(g) < 1e-10:
            break
        if g < 0.0:
            lo = delta
        else:
            hi = delta
    return PlasmodeGenerator(
        source=source,
        scenario=scenario,
        ps_coef=ps_coef,
        ps_delta=float(delta),
        om_coef=om_coef,
        residuals=residuals,
        target_prevalence=prevalence,
    )


def draw_plasmode(gen: PlasmodeGenerator, seed: int) -> SyntheticDraw:
    """Bootstrap covariate rows, reassign treatment, regenerate outcomes."""
    rng = np.random.default_rng(seed)
    src = gen.source
    n = src.n
    idx = rng.integers(0, n, n)
    boot = src.subset(idx)

    X_ps = build_design(gen.scenario.ps_formula, boot)
    p = expit(X_ps.values @ gen.ps_coef + gen.ps_delta)
    A = (rng.random(n) < p).astype(float)

    e = gen.residuals[rng.integers(0, n, n)]
    X0 = build_design(gen.scenario.om_formula, boot, treatment_override=0)
    X1 = build_design(gen.scenario.om_formula, boot, treatment_override=1)
    y0 = X0.values @ gen.om_coef + e
    y1 = X1.values @ gen.om_coef + e
    Y = np.where(A == 1.0, y1, y0)

    dataset = Dataset(
        covariates=boot.covariates,
        covariate_names=src.covariate_names,
        treatment=A,
        outcome=Y,
        treatment_name=src.treatment_name,
        outcome_name=src.outcome_name,
    )
    return SyntheticDraw(dataset=dataset, y0=y0, y1=y1,
                         true_ate_marginal=float((y1 - y0).mean()))


def compute_true_ate(gen: PlasmodeGenerator, n_sims: int = 10000, seed: int = 0) -> float:
    """Mean over bootstrap populations of the per-draw mean of y1 - y0.

    The residual term cancels in y1 - y0, so only covariate rows need to be
    resampled.
    """
    tau = gen.treatment_effect_per_row(gen.source)
    n = gen.source.n
    rng = np.random.default_rng(seed)
    acc = 0.0
    for _ in range(n_sims):
        acc += tau[rng.integers(0, n, n)].mean()
    return float(acc / n_sims)


# correlated-cluster layout for the surrogate source: (size, within correlation)
_CLUSTERS = (
    (3, 0.92), (2, 0.91),
    (4, 0.84), (2, 0.86), (2, 0.83), (2, 0.82),
    (5, 0.74), (4, 0.73), (2, 0.76),
)
_BINARY_INDICES = (1, 4, 17)  # VAR_2, VAR_5, VAR_18: comorbidity-style indicators


def generate_surrogate_source(n: int = 1178, d: int = 331, seed: int = 0) -> Dataset:
    """Synthesize a covariate source with realistic correlation structure.

    A handful of tight column clusters reproduce the heavy pairwise
    correlation tail (about 30 pairs beyond |r| = 0.7, 13 beyond 0.8, 4
    beyond 0.9 at the default size); the remaining columns load weakly on a
    global factor. Continuous columns are standardized, a few are
    dichotomized, and binary treatment and continuous outcome columns are
    synthesized so the plasmode engine has something to fit.
    """
    if d < 41:
        raise ValueError(f"need at least 41 covariates, got {d}")
    rng = np.random.default_rng(seed)

    global_factor = rng.normal(size=n)
    loadings = rng.uniform(0.0, 0.25, size=d)
    X = np.sqrt(loadings) * global_factor[:, None] + np.sqrt(1.0 - loadings) * rng.normal(size=(n, d))

    # tight clusters; placed high so VAR_217 sits inside one of them
    start = min(209, d - sum(size for size, _ in _CLUSTERS)) if d >= 250 else 41
    pos = start
    for size, r in _CLUSTERS:
        if pos + size > d:
            break
        f = rng.normal(size=n)
        for j in range(pos, pos + size):
            X[:, j] = np.sqrt(r) * f + np.sqrt(1.0 - r) * rng.normal(size=n)
        pos += size

    X = (X - X.mean(axis=0)) / X.std(axis=0)
    for j, q in zip(_BINARY_INDICES, (0.70, 0.80, 0.65)):
        X[:, j] = (X[:, j] > np.quantile(X[:, j], q)).astype(float)

    eta = -1.7 + 0.55 * X[:, 0] + 0.8 * X[:, 17] + 0.35 * X[:, 8] - 0.3 * X[:, 29]
    A = (rng.random(n) < expit(eta)).astype(float)
    Y = (3.1 + 0.30 * X[:, 0] + 0.15 * X[:, 15] + 0.10 * X[:, 8] + 0.12 * X[:, 4]
         + 0.25 * A + rng.normal(0.0, 0.45, n))

    names = tuple(f"VAR_{j + 1}" for j in range(d))
    return Dataset(covariates=X, covariate_names=names, treatment=A, outcome=Y)
