"""Figure rendering for sweep reports.

Renders the three report figures next to summary.csv: packet loss and
pre-roll delay versus congestion level per delivery mode, and PSNR by
subscriber class.  Uses the Agg backend; files only, no display.
"""

from __future__ import annotations

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

MODE_STYLE = {
    "multicast": dict(color="tab:blue", marker="o"),
    "alm_sdn": dict(color="tab:orange", marker="s"),
    "alm_learning": dict(color="tab:red", marker="^"),
}


def _series(rows, key):
    """Per (mode, algorithm): sorted (level, value) pairs, gaps where
    the summary holds a dash."""
    out = {}
    for row in rows:
        label = f"{row['mode']}:{row['algorithm']}"
        val = row[key]
        if val in (None, "-"):
            continue
        out.setdefault(label, []).append((row["cross_level"], float(val)))
    return {k: sorted(v) for k, v in out.items()}


def _style(label):
    return MODE_STYLE.get(label.split(":")[0], dict(marker="x"))


def _plot_metric(rows, key, ylabel, path, logy=False):
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, pts in sorted(_series(rows, key).items()):
        xs, ys = zip(*pts)
        ax.plot(xs, ys, label=label, **_style(label))
    ax.set_xlabel("cross-traffic generators")
    ax.set_ylabel(ylabel)
    if logy:
        ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_sweep_figures(rows, out_dir):
    _plot_metric(rows, "loss_pct", "video packet loss (%)",
                 os.path.join(out_dir, "loss_vs_load.png"))
    _plot_metric(rows, "preroll_p90", "pre-roll delay, p90 (s)",
                 os.path.join(out_dir, "preroll_vs_load.png"))

    fig, ax = plt.subplots(figsize=(6, 4))
    for key, ls in (("psnr_premium", "-"), ("psnr_standard", "--")):
        for label, pts in sorted(_series(rows, key).items()):
            xs, ys = zip(*pts)
            ax.plot(xs, ys, ls, label=f"{label} {key.split('_')[1]}",
                    **_style(label))
    ax.set_xlabel("cross-traffic generators")
    ax.set_ylabel("PSNR (dB)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "psnr_vs_load.png"), dpi=120)
    plt.close(fig)
    return [os.path.join(out_dir, name) for name in
            ("loss_vs_load.png", "preroll_vs_load.png",
             "psnr_vs_load.png")]
