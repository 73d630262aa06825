"""Command line: ``levyasym check|simulate|verify|report``.

Exit codes: 0 when every requested verdict passes (or is labelled outside
theorem scope), 1 when a requested verdict fails, 2 on configuration or
domain errors.
"""
from __future__ import annotations

import argparse
import os
import sys

from .config import ConfigError, load_config
from .exprlang import ExprError
from .harness import (EnsembleStats, condition_reports, render_summary, run_ensemble, verdict,
                      write_outputs)
from .hypotheses import FAILS, format_report_table, reports_from_csv, reports_to_csv
from .levy import MeasureError
from .quadratures import QuadratureError


def _overrides(cfg, args):
    upd = {}
    if args.seed is not None:
        upd["run__seed"] = args.seed
    if args.paths is not None:
        upd["run__n_paths"] = args.paths
    if args.step is not None:
        upd["run__step"] = args.step
    if args.horizon is not None:
        upd["model__horizon"] = args.horizon
    if args.out is not None:
        upd["output__dir"] = args.out
    if args.section5:
        upd["run__section5"] = True
    if getattr(args, "workers", None) is not None:
        upd["run__workers"] = args.workers
    return cfg.replace(**upd) if upd else cfg


def cmd_check(args) -> int:
    cfg = _overrides(load_config(args.config), args)
    reports = condition_reports(cfg.model(), cfg)
    sys.stdout.write(format_report_table(reports))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "conditions.csv"), "w", encoding="utf-8") as fh:
            fh.write(reports_to_csv(reports))
    return 1 if any(r.verdict == FAILS for r in reports) else 0


def cmd_simulate(args) -> int:
    cfg = _overrides(load_config(args.config), args)
    result = run_ensemble(cfg)
    write_outputs(result, cfg["output.dir"], save_paths=True)
    print(f"wrote {result.stats.n_paths} paths to {cfg['output.dir']}")
    return 0


def cmd_verify(args) -> int:
    cfg = _overrides(load_config(args.config), args)
    result = run_ensemble(cfg)
    write_outputs(result, cfg["output.dir"])
    with open(os.path.join(cfg["output.dir"], "summary.txt"), encoding="utf-8") as fh:
        sys.stdout.write(fh.read())
    return result.exit_code()


def cmd_report(args) -> int:
    d = args.run_dir
    cfg = load_config(os.path.join(d, "config.txt"))
    with open(os.path.join(d, "stats.csv"), encoding="utf-8") as fh:
        stats = EnsembleStats.from_csv(fh.read())
    with open(os.path.join(d, "conditions.csv"), encoding="utf-8") as fh:
        reports = reports_from_csv(fh.read())
    vs = verdict(stats, cfg, reports)
    sys.stdout.write(render_summary(stats, reports, vs))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="levyasym", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, hlp in (("check", cmd_check, "run the condition checkers"),
                          ("simulate", cmd_simulate, "simulate paths and write ledgers"),
                          ("verify", cmd_verify, "check, simulate and judge")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("config")
        s.add_argument("--seed", type=int)
        s.add_argument("--paths", type=int)
        s.add_argument("--step", type=float)
        s.add_argument("--horizon", type=float)
        s.add_argument("--out")
        s.add_argument("--workers", type=int)
        s.add_argument("--section5", action="store_true")
        s.set_defaults(func=fn)
    r = sub.add_parser("report", help="re-render a saved run directory")
    r.add_argument("run_dir")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ExprError, MeasureError, QuadratureError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
