"""Command-line entry point: ``mesoml run | profile | boruta | synth``."""

from __future__ import annotations

import argparse
import sys

from .boruta import BorutaConfig, boruta_run
from .dataset import DEFAULT_CLASS_COLUMN, impute_missing, load_table, profile, select_phase, write_table
from .errors import MesomlError, StageError
from .experiment import ExperimentConfig, emit_report, load_config, parse_assignments, run_experiment
from .synth import BUILTIN, DEFAULT_PREVALENCE, generate_synthetic
from .trees import ForestConfig


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mesoml", description="Two-phase classifier comparison toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="cross-validate a model roster and write reports")
    r.add_argument("--config", help="key=value config file; flags override it")
    r.add_argument("--data")
    r.add_argument("--phase", choices=["1", "2", "phase1", "phase2"])
    r.add_argument("--models", help="comma-separated roster, e.g. sgd,adaboost,klr")
    r.add_argument("--k", type=int)
    r.add_argument("--seed", type=_u64)
    r.add_argument("--alpha", type=float)
    r.add_argument("--out")
    r.add_argument("--per-fold-selection", action="store_true", default=None)
    r.add_argument("--workers", type=int)
    r.add_argument("--class-column")
    r.add_argument("--set", action="append", default=[], metavar="MODEL.PARAM=VALUE",
                   help="learner hyperparameter, repeatable (e.g. mlp.epochs=200)")

    pr = sub.add_parser("profile", help="per-predictor mean, deviation and class association")
    pr.add_argument("--data", required=True)
    pr.add_argument("--class-column", default=DEFAULT_CLASS_COLUMN)
    pr.add_argument("--out", help="write the profile as CSV instead of printing it")

    b = sub.add_parser("boruta", help="Boruta feature selection on phase-2 predictors")
    b.add_argument("--data", required=True)
    b.add_argument("--seed", type=_u64, default=0)
    b.add_argument("--phase", choices=["1", "2", "phase1", "phase2"], default="2")
    b.add_argument("--max-iter", type=int, default=100)
    b.add_argument("--trees", type=int, default=100)
    b.add_argument("--p-value", type=float, default=0.01)
    b.add_argument("--class-column", default=DEFAULT_CLASS_COLUMN)
    b.add_argument("--out", help="write decisions as CSV")

    s = sub.add_parser("synth", help="generate a synthetic dataset from a schema")
    s.add_argument("--schema", default=BUILTIN, help=f"schema CSV or '{BUILTIN}'")
    s.add_argument("--n", type=int, default=324)
    s.add_argument("--seed", type=_u64, default=0)
    s.add_argument("--prevalence", type=float, default=DEFAULT_PREVALENCE)
    s.add_argument("--no-leak", action="store_true", help="omit the leak column")
    s.add_argument("--out", required=True)
    return p


def _run(args) -> int:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    flags = []
    for key in ("data", "phase", "models", "k", "seed", "alpha", "out", "per_fold_selection",
                "workers", "class_column"):
        v = getattr(args, key)
        if v is not None:
            flags.append(f"{key}={v}")
    cfg = parse_assignments(flags + list(args.set), cfg)
    report = run_experiment(cfg)
    if cfg.out:
        emit_report(report, cfg.out)
    width = max(len(m) for m in report.models)
    print(f"{'model':<{width}}  accuracy  f-measure  ROC    PRC    RMSE")
    for r in report.reports:
        print(f"{r.model:<{width}}  {100 * r.accuracy:8.2f}  {r.f_measure:9.3f}  "
              f"{r.roc_auc:.3f}  {r.prc_auc:.3f}  {r.rmse:.3f}")
    if report.boruta is not None:
        print("selected: " + ", ".join(report.features))
    return 0


def _profile(args) -> int:
    d = StageError.wrap("load", load_table, args.data, args.class_column)
    rep = profile(d)
    if args.out:
        rep.to_csv(args.out)
        return 0
    width = max([len(r.name) for r in rep.rows] + [9])
    print(f"{'Predictor':<{width}}  {'Mean':>12}  {'Deviation':>12}  Association")
    for r in rep.rows:
        mean = "-" if r.mean is None else f"{r.mean:.2f}"
        dev = "-" if r.deviation is None else f"{r.deviation:.2f}"
        print(f"{r.name:<{width}}  {mean:>12}  {dev:>12}  {r.association:.2f}")
    return 0


def _boruta(args) -> int:
    d = StageError.wrap("load", load_table, args.data, args.class_column)
    d = StageError.wrap("select_phase", select_phase, impute_missing(d), args.phase)
    cfg = BorutaConfig(max_iter=args.max_iter, p_value=args.p_value,
                       forest=ForestConfig(n_trees=args.trees), seed=args.seed)
    res = StageError.wrap("boruta", boruta_run, d, cfg)
    if args.out:
        res.to_csv(args.out)
    width = max(len(n) for n in res.names)
    for n in res.names:
        print(f"{n:<{width}}  {res.decisions[n]:<9}  median Z {res.median_z(n):8.3f}  hits {res.hits[n]}/{res.trials[n]}")
    print(f"iterations: {res.iterations}")
    return 0


def _synth(args) -> int:
    d = StageError.wrap("synth", generate_synthetic, args.schema, args.n, args.seed,
                        args.prevalence, not args.no_leak)
    StageError.wrap("write", write_table, d, args.out)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": _run, "profile": _profile, "boruta": _boruta, "synth": _synth}[args.command]
    try:
        return handler(args)
    except StageError as exc:
        print(f"mesoml {args.command}: error {exc}", file=sys.stderr)
        return 1
    except (MesomlError, ValueError, OSError) as exc:
        print(f"mesoml {args.command}: error [config] {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
