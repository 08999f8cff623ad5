"""Command-line interface: estimate | simulate | bench.

Options may come from flags or from a JSON config file (``--config``);
the file wins on conflicts, with a warning. Every run writes a manifest
(resolved config + seed + version) sufficient to reproduce it.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

import drbench
from drbench.bench import (
    EstimatorConfig,
    emit_report,
    parse_estimator_list,
    run_benchmark,
    run_estimator,
)
from drbench.data import DataError, Dataset, load_csv
from drbench.estimators import EstimationError
from drbench.formula import FormulaError, parse_formula
from drbench.learners import LearnerError, fit_ols
from drbench.plasmode import ScenarioSpec, compute_true_ate, make_plasmode_generator
from drbench.presets import PRESETS, get_preset
from drbench import formula as formula_mod


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drbench",
                                     description="Doubly-robust ATE estimation and benchmarking")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; file values win over flags")
        p.add_argument("--data", help="input CSV (header row, numeric columns)")
        p.add_argument("--preset", choices=sorted(PRESETS),
                       help="built-in scenario preset")
        p.add_argument("--ps-formula", help="propensity model formula, e.g. 'A ~ X1 + X2'")
        p.add_argument("--om-formula", help="outcome model formula, e.g. 'Y ~ A + X1'")
        p.add_argument("--seed", type=int, help="RNG seed (required)")
        p.add_argument("--out", help="output path (bench/estimate: report file; simulate: directory)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")

    est = sub.add_parser("estimate", help="estimate the ATE once on observed data")
    common(est)
    est.add_argument("--estimators", default="aipw:glm",
                     help="comma list of kind[:library], e.g. 'ipw,dc-tmle:smooth'")
    est.add_argument("--repeats", type=int, default=5, help="cross-fit repeats for dc-* estimators")
    est.add_argument("--folds", type=int, default=5, help="ensemble CV folds")
    est.add_argument("--truncate-pct", type=float, default=0.05, help="IPW weight truncation percentile")
    est.add_argument("--no-stabilize", action="store_true", help="disable IPW weight stabilization")

    sim = sub.add_parser("simulate", help="materialize synthetic replicate datasets")
    common(sim)
    sim.add_argument("--replicates", type=int, default=10)
    sim.add_argument("--n", type=int, default=600, help="sample size for the kang-schafer preset")
    sim.add_argument("--true-ate", type=float,
                     help="treatment coefficient for a custom source (default: fitted)")
    sim.add_argument("--truth-sims", type=int, default=10000,
                     help="bootstrap populations used to recompute the true ATE")

    ben = sub.add_parser("bench", help="benchmark estimators over simulated replicates")
    common(ben)
    ben.add_argument("--estimators", default="aipw:glm")
    ben.add_argument("--replicates", type=int, default=100)
    ben.add_argument("--repeats", type=int, default=5)
    ben.add_argument("--folds", type=int, default=5)
    ben.add_argument("--truncate-pct", type=float, default=0.05)
    ben.add_argument("--no-stabilize", action="store_true")
    ben.add_argument("--n", type=int, default=600)
    ben.add_argument("--true-ate", type=float)
    ben.add_argument("--truth-sims", type=int, default=10000)
    ben.add_argument("--workers", type=int, default=1)
    ben.add_argument("--no-timing", action="store_true",
                     help="omit the wall-clock column from the report")
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, args: argparse.Namespace) -> None:
    if not args.config:
        return
    with open(args.config, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"config file is not valid JSON: {exc}") from exc
    for key, value in payload.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise DataError(f"unknown config key {key!r}")
        current = getattr(args, attr)
        default = parser.get_default(attr)
        if current != default and current != value:
            print(f"warning: config file overrides --{key.replace('_', '-')}"
                  f" ({current!r} -> {value!r})", file=sys.stderr)
        setattr(args, attr, value)


def _require_seed(args) -> int:
    if args.seed is None:
        raise DataError("--seed is required (set it on the command line or in the config file)")
    return int(args.seed)


def _resolved_config(args) -> dict:
    skip = {"command", "config"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _write_manifest(args, extra: dict) -> Path:
    if args.out:
        out = Path(args.out)
        path = out / "manifest.json" if args.command == "simulate" else out.with_suffix(out.suffix + ".manifest.json")
    else:
        path = Path("drbench-manifest.json")
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "command": args.command,
        "version": drbench.__version__,
        "seed": args.seed,
        "config": _resolved_config(args),
        **extra,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _load_data_for_formulas(args) -> Dataset:
    if not args.data:
        raise DataError("--data is required for this command")
    if not (args.ps_formula and args.om_formula):
        raise DataError("--ps-formula and --om-formula are required with --data")
    ps = parse_formula(args.ps_formula)
    om = parse_formula(args.om_formula)
    if ps.response is None or om.response is None:
        raise FormulaError("formulas must name their responses: 'A ~ ...' and 'Y ~ A + ...'")
    return load_csv(args.data, treatment=ps.response, outcome=om.response)


def _custom_scenario(args, source: Dataset) -> ScenarioSpec:
    om = parse_formula(args.om_formula).with_treatment(source.treatment_name)
    ps = parse_formula(args.ps_formula)
    true_ate = args.true_ate
    if true_ate is None:
        X = formula_mod.build_design(om, source)
        coef = fit_ols(X, source.outcome).parameters["coef"]
        true_ate = float(coef[X.columns.index(source.treatment_name)])
        print(f"using fitted treatment coefficient {true_ate:.4f} as the true ATE",
              file=sys.stderr)
    return ScenarioSpec(name="custom", om_formula=om, ps_formula=ps, true_ate=true_ate)


def _generator_and_truth(args, seed: int):
    """Resolve (generator, true_ate, estimation formulas) from preset or data."""
    if args.preset:
        bundle = get_preset(args.preset)
        source = None
        if args.data and bundle.is_plasmode:
            ps = parse_formula(bundle.estimation_ps)
            om = parse_formula(bundle.estimation_om)
            source = load_csv(args.data, treatment=ps.response, outcome=om.response)
        gen = bundle.build_generator(source=source, seed=seed, n=getattr(args, "n", 600))
        if bundle.is_plasmode:
            truth = compute_true_ate(gen, n_sims=args.truth_sims, seed=seed)
        else:
            truth = gen.true_ate
        ps_f = args.ps_formula or bundle.estimation_ps
        om_f = args.om_formula or bundle.estimation_om
        return gen, truth, ps_f, om_f
    source = _load_data_for_formulas(args)
    scenario = _custom_scenario(args, source)
    gen = make_plasmode_generator(source, scenario, seed=seed)
    truth = compute_true_ate(gen, n_sims=args.truth_sims, seed=seed)
    return gen, truth, args.ps_formula, args.om_formula


def cmd_estimate(args) -> int:
    seed = _require_seed(args)
    data = _load_data_for_formulas(args)
    configs = parse_estimator_list(args.estimators, args.ps_formula, args.om_formula,
                                   stabilize=not args.no_stabilize,
                                   truncate_pct=args.truncate_pct,
                                   repeats=args.repeats, folds=args.folds)
    rows = []
    for i, config in enumerate(configs):
        est = run_estimator(config, data, seed=_derive(seed, i))
        rows.append({"estimator": config.name, "psi": est.psi, "se": est.se,
                     "ci_lo": est.ci_lo, "ci_hi": est.ci_hi, "n": est.n,
                     "diagnostics": dict(est.diagnostics)})
        print(f"{config.name}: psi={est.psi:.6f} se={est.se:.6f} "
              f"ci95=[{est.ci_lo:.6f}, {est.ci_hi:.6f}] n={est.n}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
            fh.write("\n")
    _write_manifest(args, {"results": rows})
    return 0


def cmd_simulate(args) -> int:
    seed = _require_seed(args)
    if not args.out:
        raise DataError("--out directory is required for simulate")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gen, truth, _, _ = _generator_and_truth(args, seed)
    paths = []
    for r in range(args.replicates):
        draw = gen.draw(_derive(seed, 0, r))
        path = out / f"replicate_{r:04d}.csv"
        draw.dataset.to_frame().to_csv(path, index=False)
        paths.append(path.name)
    manifest = _write_manifest(args, {
        "true_ate": truth,
        "preset": args.preset,
        "replicate_files": paths,
    })
    print(f"wrote {len(paths)} replicate files to {out} (manifest: {manifest})")
    return 0


def cmd_bench(args) -> int:
    seed = _require_seed(args)
    gen, truth, ps_f, om_f = _generator_and_truth(args, seed)
    configs = parse_estimator_list(args.estimators, ps_f, om_f,
                                   stabilize=not args.no_stabilize,
                                   truncate_pct=args.truncate_pct,
                                   repeats=args.repeats, folds=args.folds)
    summaries = run_benchmark(gen, configs, replicates=args.replicates, true_ate=truth,
                              seed=seed, workers=args.workers)
    text = emit_report(summaries, format=args.format, path=args.out,
                       include_timing=not args.no_timing)
    if not args.out:
        print(text, end="")
    else:
        print(f"wrote report to {args.out}")
    _write_manifest(args, {"true_ate": truth, "preset": args.preset})
    return 0


def _derive(seed: int, *path: int) -> int:
    ss = np.random.SeedSequence([int(seed) & 0x7FFFFFFF, *[int(p) for p in path]])
    return int(ss.generate_state(1)[0])


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config_file(parser, args)
        if args.command == "estimate":
            return cmd_estimate(args)
        if args.command == "simulate":
            return cmd_simulate(args)
        return cmd_bench(args)
    except (DataError, FormulaError, EstimationError, LearnerError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
