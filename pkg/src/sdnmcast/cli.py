"""Command-line interface.

    sdnmcast run <config>        one experiment, writes logs + qoe.csv
    sdnmcast sweep <config>      full congestion sweep with summary + figures
    sdnmcast aggregate <runs>    rebuild summary.csv/figures from qoe.csv files
    sdnmcast psnr <qoe.csv>      re-aggregate one per-client QoE file

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import harness
from .scenario import ConfigError, load_config


def _add_common(p):
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")
    p.add_argument("--out-dir", default="runs",
                   help="output directory (default: runs)")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel sweep workers")


def cmd_run(args):
    scenario = load_config(args.config)
    if args.seed is not None:
        scenario = scenario.__class__(**{**scenario.__dict__,
                                         "seed": args.seed})
    _, clients = harness.run_experiment(scenario, out_dir=args.out_dir)
    for line in harness.format_summary_row(
            {"cross_level": scenario.n_cross_generators,
             "mode": scenario.mode, "algorithm": scenario.algorithm,
             **harness.summarize_run(clients)}).splitlines():
        print(line)
    return 0


def cmd_sweep(args):
    with open(args.config, "r", encoding="utf-8") as fh:
        template, levels, modes, seeds = harness.parse_sweep_config(
            fh.read())
    if args.seed is not None:
        seeds = [args.seed]
    rows = harness.sweep_and_report(template, levels, modes, seeds,
                                    out_dir=args.out_dir,
                                    workers=args.workers)
    print(harness.SUMMARY_HEADER)
    for row in rows:
        print(harness.format_summary_row(row))
    return 0


def cmd_psnr(args):
    """Re-aggregate a per-client qoe.csv into one summary line."""
    from . import qoe as qoe_mod
    clients = []
    with open(args.qoe_csv, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or \
                    line.startswith("sub_id"):
                continue
            (sub_id, cls, loss, roll, quality, pauses,
             frac) = line.split(",")
            clients.append(qoe_mod.ClientQoE(
                sub_id, cls,
                None if loss == "-" else float(loss),
                [] if roll == "-" else [float(roll)],
                None if quality == "-" else float(quality),
                int(pauses), float(frac)))
    summary = harness.summarize_run(clients)
    print("loss_pct,preroll_p90_s,preroll_p100_s,served_fraction,"
          "psnr_premium_db,psnr_standard_db")
    def num(v):
        return "-" if v in (None, "-") else f"{v:.4f}"
    print(",".join(num(summary[k]) for k in
                   ("loss_pct", "preroll_p90", "preroll_p100",
                    "served_fraction", "psnr_premium",
                    "psnr_standard")))
    return 0


def cmd_aggregate(args):
    """Rebuild summary figures from a stored summary.csv."""
    path = args.runs_dir
    if os.path.isdir(path):
        path = os.path.join(path, "summary.csv")
    with open(path, "r", encoding="utf-8") as fh:
        rows = harness.parse_summary_csv(fh.read())
    from .plots import render_sweep_figures
    files = render_sweep_figures(rows, os.path.dirname(path) or ".")
    for f in files:
        print(f)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="sdnmcast", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment")
    p.add_argument("config")
    _add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a congestion sweep")
    p.add_argument("config")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("psnr", help="re-aggregate a qoe.csv")
    p.add_argument("qoe_csv")
    p.set_defaults(func=cmd_psnr)

    p = sub.add_parser("aggregate",
                       help="re-render figures from summary.csv")
    p.add_argument("runs_dir")
    p.set_defaults(func=cmd_aggregate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
