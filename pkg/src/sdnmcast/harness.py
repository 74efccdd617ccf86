"""Experiment harness: single runs, congestion sweeps, aggregation.

Output layout:

    runs/<scenario-name>/<seed>/events.log
    runs/<scenario-name>/<seed>/control.log
    runs/<scenario-name>/<seed>/qoe.csv
    runs/<scenario-name>/summary.csv        (sweeps)
    runs/<scenario-name>/*.png              (sweep figures)

Every output file starts with a comment line echoing scenario name and
seed so a result can always be traced back to its configuration.
"""

from __future__ import annotations

import math
import os
from dataclasses import replace
from multiprocessing import Pool

from . import engine, qoe
from .scenario import ConfigError, Scenario, parse_config

SUMMARY_HEADER = ("cross_level,mode,algorithm,loss_pct_median,"
                  "preroll_p90_s,preroll_p100_s,served_fraction,"
                  "psnr_premium_db,psnr_standard_db")

DASH = "-"


def run_experiment(scenario, seed=None, out_dir=None):
    """One full simulation plus QoE evaluation; optionally persists the
    event log, control log and per-client QoE CSV."""
    seed = scenario.seed if seed is None else seed
    result = engine.run(replace(scenario, seed=seed))
    clients = qoe.evaluate_run(result, scenario)
    if out_dir is not None:
        run_dir = os.path.join(out_dir, scenario.name, str(seed))
        os.makedirs(run_dir, exist_ok=True)
        stamp = f"# scenario={scenario.name} seed={seed}"
        _write_lines(os.path.join(run_dir, "events.log"),
                     [stamp] + result.event_log)
        _write_lines(os.path.join(run_dir, "control.log"),
                     [stamp] + result.control_log)
        _write_lines(os.path.join(run_dir, "qoe.csv"),
                     [stamp] + qoe.qoe_csv_lines(clients))
    return result, clients


def _write_lines(path, lines):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _percentile_rolls(clients):
    """Per-run pre-roll summary over subscribers: (p90, p100,
    served_fraction).  Dashes appear when too few subscribers were
    actually served to fill the percentile."""
    attempted = [c for c in clients if c.pre_roll]
    if not attempted:
        return DASH, DASH, 1.0
    served_vals = sorted(c.pre_roll_value() for c in attempted
                         if c.served)
    n = len(attempted)
    frac = len(served_vals) / n
    k90 = math.ceil(0.9 * n)
    p90 = served_vals[k90 - 1] if len(served_vals) >= k90 else DASH
    p100 = served_vals[-1] if len(served_vals) == n else DASH
    return p90, p100, frac


def summarize_run(clients):
    """Scalar per-run aggregates used by the sweep table."""
    losses = [c.loss_pct for c in clients if c.loss_pct is not None]
    loss = sum(losses) / len(losses) if losses else None
    p90, p100, frac = _percentile_rolls(clients)
    by_class = {}
    for cls in ("premium", "standard"):
        vals = [c.psnr_db for c in clients
                if c.cls == cls and c.psnr_db is not None]
        by_class[cls] = sum(vals) / len(vals) if vals else None
    return {
        "loss_pct": loss,
        "preroll_p90": p90,
        "preroll_p100": p100,
        "served_fraction": frac,
        "psnr_premium": by_class["premium"],
        "psnr_standard": by_class["standard"],
    }


def _median(values):
    vals = sorted(values)
    n = len(vals)
    if n == 0:
        return None
    mid = n // 2
    if n % 2:
        return vals[mid]
    return 0.5 * (vals[mid - 1] + vals[mid])


def aggregate_cell(run_summaries):
    """Median-over-seeds aggregation of one (level, mode, algorithm)
    cell.  The served fraction is averaged over seeds so that a denial
    in any seed registers, and percentile columns dash out when that
    fraction falls below their threshold."""
    fracs = [s["served_fraction"] for s in run_summaries]
    med_frac = sum(fracs) / len(fracs) if fracs else None
    out = {"served_fraction": med_frac}
    losses = [s["loss_pct"] for s in run_summaries
              if s["loss_pct"] is not None]
    out["loss_pct"] = _median(losses)
    for key, threshold in (("preroll_p90", 0.9), ("preroll_p100", 1.0)):
        vals = [s[key] for s in run_summaries if s[key] is not DASH]
        if med_frac < threshold - 1e-9 or not vals:
            out[key] = DASH
        else:
            out[key] = _median(vals)
    for key in ("psnr_premium", "psnr_standard"):
        vals = [s[key] for s in run_summaries if s[key] is not None]
        out[key] = _median(vals)
    return out


def _cell_worker(args):
    scenario, seed = args
    _, clients = run_experiment(scenario, seed=seed)
    return summarize_run(clients)


def sweep_and_report(template, cross_levels, modes, seeds, out_dir=None,
                     workers=1):
    """Cartesian sweep over congestion levels, delivery modes and
    seeds.  `modes` is a list of (mode, algorithm) pairs.  Returns the
    summary rows and, when out_dir is given, writes summary.csv plus
    figures."""
    if not cross_levels:
        raise ConfigError("cross_levels must be non-empty")
    cells = []
    for level in cross_levels:
        for mode, algorithm in modes:
            name = f"{template.name}-x{level}-{mode}-{algorithm}"
            scenario = replace(template, name=name, mode=mode,
                               algorithm=algorithm,
                               n_cross_generators=level)
            cells.append((level, mode, algorithm, scenario))

    jobs = [(scenario, seed) for _, _, _, scenario in cells
            for seed in seeds]
    if workers > 1:
        with Pool(workers) as pool:
            summaries = pool.map(_cell_worker, jobs)
    else:
        summaries = [_cell_worker(job) for job in jobs]

    rows = []
    idx = 0
    for level, mode, algorithm, _ in cells:
        cell = summaries[idx:idx + len(seeds)]
        idx += len(seeds)
        agg = aggregate_cell(cell)
        rows.append({"cross_level": level, "mode": mode,
                     "algorithm": algorithm, **agg})

    if out_dir is not None:
        sweep_dir = os.path.join(out_dir, template.name)
        os.makedirs(sweep_dir, exist_ok=True)
        stamp = (f"# scenario={template.name} "
                 f"seeds={','.join(str(s) for s in seeds)}")
        _write_lines(os.path.join(sweep_dir, "summary.csv"),
                     [stamp, SUMMARY_HEADER]
                     + [format_summary_row(r) for r in rows])
        from .plots import render_sweep_figures
        render_sweep_figures(rows, sweep_dir)
    return rows


def format_summary_row(row):
    def num(v, fmt="{:.4f}"):
        if v is None or v is DASH:
            return DASH
        return fmt.format(v)
    return ",".join([
        str(row["cross_level"]), row["mode"], row["algorithm"],
        num(row["loss_pct"]), num(row["preroll_p90"]),
        num(row["preroll_p100"]), num(row["served_fraction"]),
        num(row["psnr_premium"]), num(row["psnr_standard"]),
    ])


def parse_summary_csv(text):
    """Inverse of format_summary_row, for re-aggregation and plotting
    from a stored summary.csv."""
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("cross_level"):
            continue
        parts = line.split(",")
        def num(v):
            return None if v == DASH else float(v)
        rows.append({
            "cross_level": int(parts[0]), "mode": parts[1],
            "algorithm": parts[2], "loss_pct": num(parts[3]),
            "preroll_p90": num(parts[4]), "preroll_p100": num(parts[5]),
            "served_fraction": num(parts[6]),
            "psnr_premium": num(parts[7]), "psnr_standard": num(parts[8]),
        })
    return rows


# -- sweep configuration ------------------------------------------------

SWEEP_KEYS = ("cross_levels", "sweep_modes", "seeds")


def parse_sweep_config(text):
    """Split sweep-level keys out of a flat config document; the rest
    parses as the scenario template.

    Sweep keys: ``cross_levels = 10,40,80``; ``seeds = 1,2,3``;
    ``sweep_modes = multicast:minmax,alm_sdn:minmax,alm_learning:min_hop``.
    """
    scenario_lines = []
    sweep = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line or "=" not in line:
            scenario_lines.append(raw)
            continue
        key = line.partition("=")[0].strip()
        if key in SWEEP_KEYS:
            sweep[key] = line.partition("=")[2].strip()
        else:
            scenario_lines.append(raw)
    template = parse_config("\n".join(scenario_lines))
    levels = [int(v) for v in sweep.get("cross_levels", "").split(",")
              if v.strip()]
    seeds = [int(v) for v in sweep.get("seeds", "1").split(",")
             if v.strip()]
    modes = []
    for item in sweep.get(
            "sweep_modes",
            "multicast:minmax,alm_sdn:minmax,alm_learning:min_hop"
            ).split(","):
        mode, _, algorithm = item.strip().partition(":")
        modes.append((mode, algorithm or "minmax"))
    if not levels:
        raise ConfigError("sweep config needs cross_levels")
    return template, levels, modes, seeds
