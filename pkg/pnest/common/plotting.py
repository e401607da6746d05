"""
SVG charts of an aggregate CSV: the median average regret and parameter error with
their min/max band across seeds. Output depends only on the CSV contents.
"""
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .utils import read_csv  # noqa: E402

# fixed ids inside the SVG, so equal data gives equal files
plt.rcParams["svg.hashsalt"] = "pnest"

CHARTS = {
    "avg_regret": {"ylabel": "(1/t) R_t", "logy": False},
    "param_err": {"ylabel": "||theta* - theta_hat_t||^2", "logy": True},
}


def plot_metric(t, median, lo, hi, path, ylabel, title, logy=False):
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.fill_between(t, lo, hi, alpha=0.25, linewidth=0, label="min/max over seeds")
    ax.plot(t, median, linewidth=1.2, label="median")
    ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(loc="best")
    ax.grid(True, which="major", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_aggregate(aggregate_csv, out_dir=None, title=""):
    """Write avg_regret.svg and param_err.svg next to the aggregate CSV (or into out_dir).

    Returns:
        list of written paths
    """
    header, rows = read_csv(aggregate_csv)
    out_dir = out_dir or os.path.dirname(str(aggregate_csv))
    col = {name: rows[:, i] for i, name in enumerate(header)}
    t = col["t"]
    written = []
    for metric, chart in CHARTS.items():
        median, lo, hi = col[f"{metric}_median"], col[f"{metric}_min"], col[f"{metric}_max"]
        if chart["logy"]:
            # zero errors cannot be drawn on a log axis
            keep = (median > 0) & (lo > 0)
            t_m, median, lo, hi = t[keep], median[keep], lo[keep], hi[keep]
        else:
            t_m = t
        path = os.path.join(out_dir, f"{metric}.svg")
        plot_metric(np.asarray(t_m), median, lo, hi, path, chart["ylabel"], f"{title} {metric}".strip(),
                    logy=chart["logy"])
        written.append(path)
    return written
