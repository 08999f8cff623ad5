"""Double cross-fit orchestration for doubly-robust estimators.

The data are split into three equal-size random parts. Within one repeat,
three rotations assign the parts to the outcome-model, propensity-model and
evaluation roles so that no part serves the same role twice (a Latin
square). Rotation estimates are averaged and their influence-function
variances pooled; the split-and-estimate process is repeated (default 5
times) and summarized by medians.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from drbench.data import Dataset
from drbench.estimators import (
    DEFAULT_G_BOUNDS,
    AteEstimate,
    EstimationError,
    NuisanceFit,
    bound_propensity,
    estimate_aipw,
    estimate_tmle,
    fit_outcome_model,
    fit_propensity_model,
)
from drbench.formula import FormulaSpec

DC_ESTIMATORS = {"aipw": estimate_aipw, "tmle": estimate_tmle}


@dataclass(frozen=True)
class RoleMap:
    """Which split index fits the OM, fits the PS, and evaluates."""

    om: int
    ps: int
    evaluate: int

    def roles(self) -> tuple[int, int, int]:
        return (self.om, self.ps, self.evaluate)


@dataclass(frozen=True)
class SplitPlan:
    """Random partition into thirds plus the three role rotations."""

    assignments: np.ndarray
    rotations: tuple[RoleMap, RoleMap, RoleMap]
    repeat_index: int = 0

    def __post_init__(self):
        a = np.asarray(self.assignments, dtype=np.int64)
        if not np.isin(a, (0, 1, 2)).all():
            raise ValueError("split labels must be 0, 1 or 2")
        sizes = np.bincount(a, minlength=3)
        if sizes.max() - sizes.min() > 1:
            raise ValueError("split sizes must differ by at most 1")
        for role_of in (lambda r: r.om, lambda r: r.ps, lambda r: r.evaluate):
            if sorted(role_of(r) for r in self.rotations) != [0, 1, 2]:
                raise ValueError("each split must take each role exactly once")
        object.__setattr__(self, "assignments", a)

    def split_indices(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == label)


def make_split_plan(n: int, seed: int, repeat_index: int = 0) -> SplitPlan:
    """Uniformly random partition into (near-)equal thirds, seeded."""
    if n < 30:
        raise ValueError(f"need at least 30 rows to cross-fit, got {n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    base = n // 3
    extra = n % 3
    start = 0
    for label in range(3):
        size = base + (1 if label < extra else 0)
        assignments[perm[start:start + size]] = label
        start += size
    rotations = tuple(RoleMap(om=r, ps=(r + 1) % 3, evaluate=(r + 2) % 3) for r in range(3))
    return SplitPlan(assignments=assignments, rotations=rotations, repeat_index=repeat_index)


def _derive_seed(seed: int, *path: int) -> int:
    ss = np.random.SeedSequence([int(seed) & 0x7FFFFFFF, *[int(p) for p in path]])
    return int(ss.generate_state(1)[0])


def dc_estimate(data: Dataset, estimator: str, ps_formula: FormulaSpec,
                om_formula: FormulaSpec, ps_learner, om_learner, repeats: int = 5,
                seed: int = 0, g_bounds: tuple[float, float] = DEFAULT_G_BOUNDS) -> AteEstimate:
    """Double cross-fit AIPW or TMLE.

    Per repeat, the three rotation estimates are averaged and their
    influence-function variances pooled as their mean scaled to the full
    sample size. Across repeats the final estimate is the median, and the
    variance is median(var_r + (psi_r - psi_median)^2), which accounts for
    split-to-split variability.
    """
    if estimator not in DC_ESTIMATORS:
        raise EstimationError(f"double cross-fit supports {sorted(DC_ESTIMATORS)}, got {estimator!r}")
    if repeats < 1:
        raise EstimationError("repeats must be >= 1")
    estimate_fn = DC_ESTIMATORS[estimator]
    n = data.n

    repeat_psis: list[float] = []
    repeat_vars: list[float] = []
    failures: list[str] = []
    for r in range(repeats):
        plan = make_split_plan(n, seed=_derive_seed(seed, r), repeat_index=r)
        try:
            psis = []
            if_vars = []
            for k, rot in enumerate(plan.rotations):
                om_data = data.subset(plan.split_indices(rot.om))
                ps_data = data.subset(plan.split_indices(rot.ps))
                eval_data = data.subset(plan.split_indices(rot.evaluate))
                ps_model = fit_propensity_model(ps_data, ps_formula, ps_learner,
                                                seed=_derive_seed(seed, r, k, 0))
                om_model = fit_outcome_model(om_data, om_formula, om_learner,
                                             seed=_derive_seed(seed, r, k, 1))
                g, record = bound_propensity(ps_model.predict(eval_data), g_bounds)
                nuisance = NuisanceFit(
                    g_hat=g,
                    m0_hat=om_model.predict(eval_data, treatment=0),
                    m1_hat=om_model.predict(eval_data, treatment=1),
                    bounds_applied=record,
                )
                est = estimate_fn(eval_data, nuisance)
                psis.append(est.psi)
                if_vars.append(est.diagnostics["if_variance"])
        except EstimationError as exc:
            failures.append(f"repeat {r}: {exc}")
            continue
        repeat_psis.append(float(np.mean(psis)))
        repeat_vars.append(float(np.mean(if_vars) / n))

    if len(repeat_psis) < max(1, repeats - repeats // 2):
        raise EstimationError(
            f"more than half of the cross-fit repeats failed ({len(failures)}/{repeats}): "
            + "; ".join(failures[:3])
        )

    psi_arr = np.asarray(repeat_psis)
    var_arr = np.asarray(repeat_vars)
    psi = float(np.median(psi_arr))
    var = float(np.median(var_arr + (psi_arr - psi) ** 2))
    se = float(np.sqrt(var))
    diag = {
        "repeats": float(repeats),
        "repeats_failed": float(len(failures)),
        "if_variance": var * n,  # full-sample convention, matching single-fit reporting
    }
    return AteEstimate(
        psi=psi,
        se=se,
        ci_lo=psi - 1.96 * se,
        ci_hi=psi + 1.96 * se,
        estimator=f"dc-{estimator}",
        n=n,
        diagnostics=diag,
    )
