"""Command line entry point.

Exit status is 0 whenever a run produced a scientific result, blow-up
included.  Configuration, I/O and data errors exit with 2; anything
unexpected exits with 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError, load_config, parse_window

EXIT_OK = 0
EXIT_CRASH = 1
EXIT_INPUT = 2


def _print(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def cmd_simulate(args) -> int:
    from .experiment import run_experiment

    cfg = load_config(args.config)
    art = run_experiment(cfg, args.out, plots=not args.no_plots)
    s = art.summary
    _print({k: s[k] for k in ("name", "outcome", "reason", "final_tau", "steps", "peak_linf", "mass_drift")} | {"run_dir": art.run_dir})
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .experiment import sweep

    cfg = load_config(args.config)
    res = sweep(cfg, args.out, workers=args.workers, plots=not args.no_plots)
    _print({"run_dir": res.run_dir, "table": res.table_path, "points": res.rows})
    return EXIT_OK


def cmd_compare_reduction(args) -> int:
    from .experiment import compare_dimensional_reduction

    cfg = load_config(args.config)
    rep = compare_dimensional_reduction(cfg, args.out)
    d = rep.to_dict()
    d.pop("per_time")
    _print(d)
    return EXIT_OK


def cmd_verify_inequalities(args) -> int:
    from .experiment import verify_inequalities

    cfg = load_config(args.config)
    reports = verify_inequalities(cfg, args.out)
    _print({r.name: {"statistic": r.statistic, "value": r.value, "stability_pct": r.stability_pct} for r in reports})
    return EXIT_OK


def cmd_fit_rate(args) -> int:
    from .experiment import _fit_dict, fit_from_columns, read_csv

    _, cols = read_csv(args.csv)
    if "tau" not in cols:
        raise ValueError(f"{args.csv}: no tau column")
    fit, err = fit_from_columns(cols, args.column, parse_window(args.window))
    if fit is None:
        print(f"fit-rate: {err}", file=sys.stderr)
        return EXIT_INPUT
    _print(_fit_dict(fit, None))
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import emit_report

    kinds = tuple(args.kind) if args.kind else ("summary_json", "svg_plots")
    for p in emit_report(args.rundir, kinds):
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shearpks", description="Sheared chemotaxis simulations and diagnostics.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_config(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="key = value configuration file")
        p.add_argument("--out", help="output directory (default: <output root>/<experiment.name>)")
        p.set_defaults(func=func)
        return p

    p = with_config("simulate", cmd_simulate, "run one simulation")
    p.add_argument("--no-plots", action="store_true")
    p = with_config("sweep", cmd_sweep, "run every (A, mass) point of a sweep")
    p.add_argument("--workers", type=int, help="worker processes (default: sweep.workers)")
    p.add_argument("--no-plots", action="store_true")
    with_config("compare-reduction", cmd_compare_reduction, "3D x-independent run against the 2D solver")
    with_config("verify-inequalities", cmd_verify_inequalities, "sample the functional inequality ratios")

    p = sub.add_parser("fit-rate", help="fit an exponential decay rate to a CSV column")
    p.add_argument("csv")
    p.add_argument("--column", required=True)
    p.add_argument("--window", default="post_transient", help="post_transient, full or t0:t1")
    p.set_defaults(func=cmd_fit_rate)

    p = sub.add_parser("report", help="write report.json and SVG plots for a run or sweep directory")
    p.add_argument("rundir")
    p.add_argument("--kind", action="append", choices=("summary_json", "svg_plots"))
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        logging.getLogger(__name__).exception("unexpected failure")
        print(f"crash: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CRASH


if __name__ == "__main__":
    sys.exit(main())
