"""Figures for the ``report`` subcommand.

Plot data is always written as CSV first; figures are rendered from those
files so they can be regenerated without re-running anything.  Output is
deterministic: the Agg backend, fixed sizes and no embedded software or date
metadata.
"""
from __future__ import annotations

import csv

import numpy as np

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 100,
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
    "svg.hashsalt": "lyapflow",
}


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def read_columns(path) -> dict:
    """CSV with a header row as ``{column: float array}``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in row] for row in body]) if body else np.empty((0, len(header)))
    return {h: data[:, i] for i, h in enumerate(header)}


def write_columns(path, columns: dict):
    keys = list(columns)
    cols = [np.asarray(columns[k], dtype=float) for k in keys]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])


def _save(fig, path):
    fig.savefig(path, format="png", metadata={"Software": None})


def render_run(plot_csv, png_path, title="", T=None):
    """Three stacked panels: gap, log E and weighted gap against ``t``."""
    plt = _pyplot()
    cols = read_columns(plot_csv)
    t = cols["t"]
    panels = [("f_gap", "f - f*", True), ("logE", "log E", False),
              ("weighted_gap", "e^gamma (f - f*)", True)]
    panels = [p for p in panels if p[0] in cols]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(len(panels), 1, sharex=True,
                                 figsize=(6.4, 2.2 * len(panels)), squeeze=False)
        for ax, (key, label, logy) in zip(axes[:, 0], panels):
            y = cols[key]
            ok = np.isfinite(y) & ((y > 0) if logy else True)
            ax.plot(t[ok], y[ok], color="C0")
            if key == "f_gap" and "bound" in cols:
                b = cols["bound"]
                okb = np.isfinite(b) & (b > 0)
                ax.plot(t[okb], b[okb], color="C3", ls="--", label="explicit bound")
                ax.legend(frameon=False, loc="upper right")
            if logy:
                ax.set_yscale("log")
            if T is not None:
                ax.axvline(T, color="0.5", ls=":", lw=1)
            ax.set_ylabel(label)
        axes[-1, 0].set_xscale("log")
        axes[-1, 0].set_xlabel("t")
        if title:
            axes[0, 0].set_title(title)
        fig.tight_layout()
        _save(fig, png_path)
        plt.close(fig)


def render_rates(rows, png_path):
    """Bar chart of fitted against proven decay exponents.

    ``rows`` are ``(label, fitted, proven)`` tuples; exponents are shown as
    positive numbers (faster decay is taller).
    """
    plt = _pyplot()
    labels = [r[0] for r in rows]
    x = np.arange(len(rows))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.bar(x - 0.2, [r[1] for r in rows], width=0.4, label="fitted", color="C0")
        ax.bar(x + 0.2, [r[2] for r in rows], width=0.4, label="proven", color="C1")
        ax.set_xticks(x)
        ax.set_xticklabels(labels, rotation=20, ha="right")
        ax.set_ylabel("decay exponent")
        ax.legend(frameon=False)
        fig.tight_layout()
        _save(fig, png_path)
        plt.close(fig)
