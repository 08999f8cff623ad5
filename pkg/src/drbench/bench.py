"""Replicated-simulation harness: run estimators over synthetic draws and
aggregate bias / SE / coverage / MSE / between-replicate variance / timing.

Per-replicate seeds are derived from the master seed by a counter scheme, so
the replicate stream is identical for any worker count; aggregation is
order-canonical by replicate index.
"""

from __future__ import annotations

import concurrent.futures
import csv
import io
import json
import logging
import sys
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from drbench.crossfit import dc_estimate
from drbench.data import Dataset
from drbench.estimators import (
    AteEstimate,
    EstimationError,
    bound_propensity,
    estimate_aipw,
    estimate_gcomp,
    estimate_iptw,
    estimate_tmle,
    fit_nuisance,
    fit_outcome_model,
    fit_propensity_model,
)
from drbench.formula import parse_formula
from drbench.learners import PROB_EPS, LearnerError, Task, learner_for
from drbench.plasmode import SyntheticDraw
from drbench.superlearner import LIBRARY_GROUPS, ensemble_for

logger = logging.getLogger(__name__)

ESTIMATOR_KINDS = ("ipw", "gcomp", "aipw", "tmle", "dc-aipw", "dc-tmle")

# n, (n-1) population/sample variance convention used throughout reports
VARIANCE_NOTE = ("bvar is the sample variance (ddof=1) of the point estimates across "
                 "replicates; mse = bvar*(R-1)/R + mean_bias^2 holds exactly")


@dataclass(frozen=True)
class EstimatorConfig:
    """One estimator column of a benchmark run."""

    kind: str
    library: str = "glm"
    ps_formula: str = ""
    om_formula: str = ""
    name: Optional[str] = None
    stabilize: bool = True
    truncate_pct: float = 0.05
    g_bounds: tuple[float, float] = (0.01, 0.99)
    repeats: int = 5
    folds: int = 5
    bootstrap_reps: int = 200

    def __post_init__(self):
        if self.kind not in ESTIMATOR_KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}; expected one of {ESTIMATOR_KINDS}")
        if self.library not in LIBRARY_GROUPS:
            raise ValueError(f"unknown learner library {self.library!r}")
        if self.name is None:
            object.__setattr__(self, "name", f"{self.kind}:{self.library}")


def parse_estimator_list(text: str, ps_formula: str, om_formula: str,
                         **common) -> list[EstimatorConfig]:
    """Parse a comma list of ``kind[:library]`` entries like ``dc-tmle:smooth``."""
    configs = []
    for entry in text.split(","):
        entry = entry.strip()
        if not entry:
            continue
        kind, _, library = entry.partition(":")
        configs.append(EstimatorConfig(kind=kind, library=library or "glm",
                                       ps_formula=ps_formula, om_formula=om_formula,
                                       **common))
    if not configs:
        raise ValueError("estimator list is empty")
    return configs


def _nuisance_learner(config: EstimatorConfig, task: Task):
    if config.library == "glm":
        return learner_for("glm", task)
    return ensemble_for(config.library, task, folds=config.folds)


def run_estimator(config: EstimatorConfig, data: Dataset, seed: int) -> AteEstimate:
    """Run one configured estimator on one dataset."""
    ps_spec = parse_formula(config.ps_formula) if config.ps_formula else None
    om_spec = parse_formula(config.om_formula) if config.om_formula else None
    ps_learner = _nuisance_learner(config, Task.BINARY_PROBABILITY)
    om_learner = _nuisance_learner(config, Task.REGRESSION)
    ss = np.random.SeedSequence([int(seed) & 0x7FFFFFFF, 1])
    sub = [int(s.generate_state(1)[0]) for s in ss.spawn(3)]

    if config.kind == "ipw":
        if ps_spec is None:
            raise EstimationError("ipw requires a propensity formula")
        ps_model = fit_propensity_model(data, ps_spec, ps_learner, seed=sub[0])
        g = np.clip(ps_model.predict(data), PROB_EPS, 1.0 - PROB_EPS)
        return estimate_iptw(data, g, stabilize=config.stabilize,
                             truncate_pct=config.truncate_pct)

    if config.kind == "gcomp":
        if om_spec is None:
            raise EstimationError("gcomp requires an outcome formula")
        om_model = fit_outcome_model(data, om_spec, om_learner, seed=sub[0])
        counter = iter(range(10 ** 9))

        def refit(resampled: Dataset):
            model = fit_outcome_model(resampled, om_spec, om_learner,
                                      seed=sub[1] + next(counter))
            return model.predict(resampled, treatment=0), model.predict(resampled, treatment=1)

        return estimate_gcomp(data, om_model.predict(data, treatment=0),
                              om_model.predict(data, treatment=1), refit=refit,
                              bootstrap_reps=config.bootstrap_reps, seed=sub[2])

    if config.kind in ("aipw", "tmle"):
        nuisance = fit_nuisance(data, ps_spec, om_spec, ps_learner, om_learner,
                                seed=sub[0], g_bounds=config.g_bounds)
        fn = estimate_aipw if config.kind == "aipw" else estimate_tmle
        return fn(data, nuisance)

    estimator = config.kind.removeprefix("dc-")
    return dc_estimate(data, estimator, ps_spec, om_spec, ps_learner, om_learner,
                       repeats=config.repeats, seed=sub[0], g_bounds=config.g_bounds)


@dataclass(frozen=True)
class ReplicateResult:
    replicate: int
    estimator: str
    psi: float
    se: float
    ci_lo: float
    ci_hi: float
    wall_seconds: float
    failed: bool
    message: str = ""


@dataclass(frozen=True)
class MetricsSummary:
    """Performance of one estimator over the replicate set."""

    estimator: str
    bias_median: float
    bias_mean: float
    se_median: float
    coverage: float
    mse: float
    bvar: float
    n_replicates: int
    failures: int
    wall_seconds_median: float

    def __post_init__(self):
        if self.n_replicates - self.failures >= 2:
            R = self.n_replicates - self.failures
            lhs = self.mse
            rhs = self.bvar * (R - 1) / R + self.bias_mean ** 2
            if abs(lhs - rhs) > 1e-9 * max(1.0, abs(lhs)):
                raise ValueError("mse decomposition violated; aggregation bug")
        if not (0.0 <= self.coverage <= 1.0) and self.n_replicates > self.failures:
            raise ValueError("coverage must lie in [0, 1]")


def _derive_seed(seed: int, *path: int) -> int:
    ss = np.random.SeedSequence([int(seed) & 0x7FFFFFFF, *[int(p) for p in path]])
    return int(ss.generate_state(1)[0])


def _estimator_fn(config: EstimatorConfig) -> Callable[[EstimatorConfig, Dataset, int], AteEstimate]:
    return CUSTOM_ESTIMATORS.get(config.kind, run_estimator)


# testing hook: map a kind name to a callable(config, data, seed) -> AteEstimate
CUSTOM_ESTIMATORS: dict[str, Callable] = {}


def _one_replicate(generator, configs: Sequence[EstimatorConfig], master_seed: int,
                   r: int) -> list[ReplicateResult]:
    draw = generator.draw(_derive_seed(master_seed, 0, r))
    results = []
    for i, config in enumerate(configs):
        t0 = time.perf_counter()
        try:
            est = _estimator_fn(config)(config, draw.dataset, _derive_seed(master_seed, 1, r, i))
            wall = time.perf_counter() - t0
            results.append(ReplicateResult(r, config.name, est.psi, est.se, est.ci_lo,
                                           est.ci_hi, wall, False))
        except (EstimationError, LearnerError, ValueError, np.linalg.LinAlgError) as exc:
            wall = time.perf_counter() - t0
            results.append(ReplicateResult(r, config.name, np.nan, np.nan, np.nan,
                                           np.nan, wall, True, str(exc)))
    return results


def run_benchmark(generator, configs: Sequence[EstimatorConfig], replicates: int = 100,
                  true_ate: float = 0.0, seed: int = 0, workers: int = 1,
                  progress: bool = True) -> list[MetricsSummary]:
    """Draw ``replicates`` datasets and run every estimator on each.

    Failures are recorded per replicate, not fatal. Results are identical
    for any ``workers`` value because seeds are derived per replicate index.
    """
    if replicates < 2:
        raise ValueError("need at least 2 replicates")
    names = [c.name for c in configs]
    if len(set(names)) != len(names):
        raise ValueError(f"estimator names must be unique, got {names}")

    per_replicate: list[Optional[list[ReplicateResult]]] = [None] * replicates
    if workers <= 1:
        for r in range(replicates):
            per_replicate[r] = _one_replicate(generator, configs, seed, r)
            if progress:
                print(f"replicate {r + 1}/{replicates} done", file=sys.stderr)
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_one_replicate, generator, configs, seed, r): r
                       for r in range(replicates)}
            done = 0
            for fut in concurrent.futures.as_completed(futures):
                r = futures[fut]
                per_replicate[r] = fut.result()
                done += 1
                if progress:
                    print(f"replicate {done}/{replicates} done", file=sys.stderr)

    flat = [res for group in per_replicate for res in group]  # canonical order
    summaries = []
    for config in configs:
        rows = [x for x in flat if x.estimator == config.name]
        ok = [x for x in rows if not x.failed]
        failures = len(rows) - len(ok)
        if not ok:
            summaries.append(MetricsSummary(config.name, np.nan, np.nan, np.nan, np.nan,
                                            np.nan, np.nan, len(rows), failures, np.nan))
            continue
        psis = np.array([x.psi for x in ok])
        ses = np.array([x.se for x in ok])
        covered = np.array([x.ci_lo <= true_ate <= x.ci_hi for x in ok], dtype=float)
        walls = np.array([x.wall_seconds for x in rows])
        bias = psis - true_ate
        summaries.append(MetricsSummary(
            estimator=config.name,
            bias_median=float(np.median(bias)),
            bias_mean=float(bias.mean()),
            se_median=float(np.median(ses)),
            coverage=float(covered.mean()),
            mse=float((bias ** 2).mean()),
            bvar=float(psis.var(ddof=1)) if len(ok) > 1 else 0.0,
            n_replicates=len(rows),
            failures=failures,
            wall_seconds_median=float(np.median(walls)),
        ))
    return summaries


REPORT_COLUMNS = ("estimator", "bias_x100", "se_x100", "coverage", "mse", "bvar",
                  "time_s", "failures")
EXTRA_COLUMNS = ("bias_median", "bias_mean", "se_median", "n_replicates")


def _summary_row(s: MetricsSummary, include_timing: bool) -> dict:
    row = {
        "estimator": s.estimator,
        "bias_x100": 100.0 * s.bias_median,
        "se_x100": 100.0 * s.se_median,
        "coverage": s.coverage,
        "mse": s.mse,
        "bvar": s.bvar,
        "time_s": s.wall_seconds_median,
        "failures": s.failures,
        "bias_median": s.bias_median,
        "bias_mean": s.bias_mean,
        "se_median": s.se_median,
        "n_replicates": s.n_replicates,
    }
    if not include_timing:
        del row["time_s"]
    return row


def emit_report(summaries: Sequence[MetricsSummary], format: str = "csv",
                path=None, include_timing: bool = True) -> str:
    """Serialize summaries with a stable column order; returns the text.

    ``include_timing=False`` omits the wall-clock column, making reports
    from the same seed byte-identical across runs and worker counts.
    """
    if not summaries:
        raise ValueError("no summaries to report")
    columns = [c for c in REPORT_COLUMNS + EXTRA_COLUMNS
               if include_timing or c != "time_s"]
    rows = [_summary_row(s, include_timing) for s in summaries]
    if format == "json":
        text = json.dumps({"variance_convention": VARIANCE_NOTE, "columns": columns,
                           "summaries": rows}, indent=2) + "\n"
    elif format == "csv":
        buf = io.StringIO()
        buf.write(f"# {VARIANCE_NOTE}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([row[c] if c == "estimator" else repr(float(row[c]))
                             if isinstance(row[c], float) else row[c] for c in columns])
        text = buf.getvalue()
    else:
        raise ValueError(f"unknown report format {format!r}")
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def parse_report(path) -> list[dict]:
    """Read back an emitted CSV/JSON report (used for round-trip checks)."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        return json.loads(text)["summaries"]
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    reader = csv.DictReader(io.StringIO("\n".join(lines)))
    out = []
    for raw in reader:
        row = {}
        for key, val in raw.items():
            if key == "estimator":
                row[key] = val
            elif key in ("failures", "n_replicates"):
                row[key] = int(val)
            else:
                row[key] = float(val)
        out.append(row)
    return out
