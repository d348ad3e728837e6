"""Static SVG line charts rendered from the CSV outputs."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# series key, x column, y column, log-y
LAYOUT = {
    "fig1-left": ("epsilon", "M", "rate_per_pseudosample", True),
    "fig1-right": ("discount", "M", "epsilon", True),
    "fig2-yobs": ("y_obs", "M", "normalized_epsilon", False),
    "fig2-sigma": ("sigma_y", "M", "normalized_epsilon", False),
}


def figure_svg(figure: str, csv_path: Path, svg_path: Path) -> None:
    """Draw one line per series value from ``csv_path``; the CSV is only read."""
    from .cli import read_csv

    series_col, x_col, y_col, log_y = LAYOUT[figure]
    series = defaultdict(list)
    for row in read_csv(csv_path):
        series[float(row[series_col])].append((float(row[x_col]), float(row[y_col])))
    plt.rcParams["svg.hashsalt"] = "abcmc"
    fig, ax = plt.subplots(figsize=(6, 4))
    for key in sorted(series):
        pts = sorted(series[key])
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                label=f"{series_col}={key:g}")
    ax.set_xscale("log", base=2)
    if log_y:
        ax.set_yscale("log")
    ax.set_xlabel(x_col)
    ax.set_ylabel(y_col)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(svg_path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
