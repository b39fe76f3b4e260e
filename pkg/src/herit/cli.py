"""Command-line interface: ``herit {simulate,estimate,diagnose,report}``.

Exit status is 0 on success, 1 on a validation error and 2 on an I/O or
file-format error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from typing import Optional, Sequence

from . import diagnostics as dg
from . import estimators as est
from . import experiments as ex
from . import generators as gen
from . import report
from . import summary as sm

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 1, 2


def _dump(obj) -> str:
    # non-finite floats become strings ("inf") so the output stays valid JSON
    def fix(v):
        if isinstance(v, float) and not math.isfinite(v):
            return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
        if isinstance(v, dict):
            return {k: fix(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [fix(x) for x in v]
        return v
    return json.dumps(fix(obj), indent=2, sort_keys=True)


def _cmd_simulate(args) -> int:
    config = ex.ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.replicates is not None:
        config.replicates = args.replicates
    config.__post_init__()
    table = ex.run_experiment(config, threads=args.threads)
    rows_path, agg_path = table.write(args.out)
    print(_dump({"rows": str(rows_path), "aggregates": str(agg_path), "cells": table.cell_info}))
    return EXIT_OK


def _spec_from_args(args) -> est.EstimatorSpec:
    return est.EstimatorSpec(family=args.family, intercept=args.intercept, weighted=args.weighted,
                             standardized_inputs=args.standardized,
                             truncate_denominator=args.truncate, clip=args.clip)


def _cmd_estimate(args) -> int:
    spec = _spec_from_args(args)
    stats, _ = sm.read_sumstats(args.sumstats)
    ld, _ = sm.read_ldscores(args.ldscores)
    if stats.m != ld.m:
        raise ValueError(f"sumstats have m={stats.m} but LD scores have m={ld.m}")
    if args.standardized:
        stats.standardized = True
    res = est.estimate(spec, stats, ld)
    out = {"h2_hat": res.h2_hat, "numerator": res.numerator, "denominator": res.denominator,
           "estimator": spec.label}
    if res.intercept_hat is not None:
        out["intercept"] = res.intercept_hat
    if res.preliminary_h2 is not None:
        out["preliminary_h2"] = res.preliminary_h2
    print(_dump(out))
    return EXIT_OK


def _correlation_from_args(args) -> gen.CorrelationSpec:
    kind = args.correlation
    if kind == "identity":
        return gen.Identity()
    if args.rho is None:
        raise ValueError(f"--rho is required for {kind}")
    if kind == "ar1":
        return gen.Ar1(args.rho)
    if kind == "equicorr":
        return gen.EquiCorr(args.rho)
    if args.rho_second is None:
        raise ValueError("--rho-second is required for mixed_ar1")
    return gen.MixedAr1(args.rho, args.rho_second)


def _coeff_from_args(args, m: int) -> Optional[gen.CoeffLaw]:
    if args.effects is None:
        return None
    if args.effects == "gaussian":
        v = gen.GaussianEffects()
    elif args.effects == "t":
        if args.nu is None:
            raise ValueError("--nu is required for t effects")
        v = gen.StudentT(args.nu)
    else:
        if args.theta is None or args.p is None:
            raise ValueError("--theta and --p are required for mixture effects")
        v = gen.Mixture(args.theta, args.p)
    return gen.CoeffLaw(v, args.h2, m)


def _cmd_diagnose(args) -> int:
    if args.panel is not None:
        ld, _ = sm.read_ldscores(args.panel)
        rep = dg.condition_report(ld, coeff_law=_coeff_from_args(args, ld.m))
    else:
        if args.correlation is None or args.m is None:
            raise ValueError("give either --panel or both --correlation and --m")
        rep = dg.condition_report(_correlation_from_args(args), m=args.m,
                                  coeff_law=_coeff_from_args(args, args.m))
    print(_dump(dataclasses.asdict(rep)))
    return EXIT_OK


def _cmd_report(args) -> int:
    aggs = ex.read_aggregates_csv(args.aggregates)
    for p in report.write_report(aggs, args.out):
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="herit", description="Heritability estimation from summary statistics.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a simulation study from a JSON config")
    s.add_argument("config", help="experiment config (JSON)")
    s.add_argument("--out", required=True, help="output directory for rows.csv and aggregates.csv")
    s.add_argument("--seed", type=int, help="override the config seed")
    s.add_argument("--replicates", type=int, help="override the replicate count")
    s.add_argument("--threads", type=int, help="worker threads (default: HERIT_THREADS or 1)")
    s.set_defaults(func=_cmd_simulate)

    e = sub.add_parser("estimate", help="estimate h2 from sumstats and LD score files")
    e.add_argument("--sumstats", required=True, help="SNP/Z/N table")
    e.add_argument("--ldscores", required=True, help="SNP/L2 table with .json sidecar")
    e.add_argument("--family", choices=(est.GWASH, est.LDSC), default=est.GWASH)
    e.add_argument("--intercept", choices=(est.FIXED, est.FREE), default=est.FIXED)
    e.add_argument("--weighted", action="store_true")
    e.add_argument("--standardized", action="store_true")
    e.add_argument("--truncate", action="store_true", help="truncate the GWASH denominator at 1")
    e.add_argument("--clip", action="store_true", help="clip the estimate to [0, 1]")
    e.set_defaults(func=_cmd_estimate)

    d = sub.add_parser("diagnose", help="dependence and kurtosis condition statistics")
    d.add_argument("--panel", help="LD score table (bias-corrected) instead of an analytic spec")
    d.add_argument("--correlation", choices=("identity", "ar1", "equicorr", "mixed_ar1"))
    d.add_argument("--rho", type=float)
    d.add_argument("--rho-second", type=float, dest="rho_second")
    d.add_argument("--m", type=int)
    d.add_argument("--effects", choices=("gaussian", "t", "mixture"))
    d.add_argument("--nu", type=float)
    d.add_argument("--theta", type=float)
    d.add_argument("--p", type=float)
    d.add_argument("--h2", type=float, default=0.2)
    d.set_defaults(func=_cmd_diagnose)

    r = sub.add_parser("report", help="render SVG charts from an aggregates CSV")
    r.add_argument("aggregates")
    r.add_argument("--out", required=True)
    r.set_defaults(func=_cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    try:
        return args.func(args)
    except (sm.FormatError, OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        print(f"herit: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, TypeError, KeyError, ArithmeticError, ex.ExperimentError) as exc:
        print(f"herit: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
