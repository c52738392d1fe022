"""Trace-tail, histogram, and autocorrelation figures for sampler comparisons.

``write_plotdata`` dumps the numbers as tidy CSVs; ``render_figures`` draws
one PNG per variable with a column per sampler (trace tail on top, histogram
in the middle, ACF at the bottom).
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .diagnostics import acf

TAIL = 5000
N_BINS = 50


def _plot_series(series: np.ndarray, max_lag: int):
    tail = series[-TAIL:]
    counts, edges = np.histogram(series, bins=N_BINS, density=True)
    lag = max(1, min(max_lag, series.size - 1))
    r = acf(series, lag).rho_hat
    return tail, counts, edges, r


def write_plotdata(chains: dict[str, dict[str, np.ndarray]], directory: Path, max_lag: int = 200) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for sampler, variables in chains.items():
        for var, series in variables.items():
            tail, counts, edges, r = _plot_series(series, max_lag)
            start = series.size - tail.size
            stem = f"{sampler}_{var}"
            with open(directory / f"{stem}_tail.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["index", "value"])
                w.writerows((start + i, repr(float(v))) for i, v in enumerate(tail))
            with open(directory / f"{stem}_hist.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["left", "right", "density"])
                w.writerows((repr(float(a)), repr(float(b)), repr(float(c))) for a, b, c in zip(edges[:-1], edges[1:], counts))
            with open(directory / f"{stem}_acf.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["lag", "acf"])
                w.writerows((i, repr(float(v))) for i, v in enumerate(r))


def render_figures(chains: dict[str, dict[str, np.ndarray]], directory: Path, max_lag: int = 200) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    directory.mkdir(parents=True, exist_ok=True)
    samplers = list(chains)
    variables = sorted({v for c in chains.values() for v in c})
    written = []
    for var in variables:
        cols = [s for s in samplers if var in chains[s]]
        fig, axes = plt.subplots(3, len(cols), figsize=(4 * len(cols), 8), squeeze=False)
        for j, s in enumerate(cols):
            series = chains[s][var]
            tail, counts, edges, r = _plot_series(series, max_lag)
            ax = axes[0, j]
            ax.plot(np.arange(series.size - tail.size, series.size), tail, lw=0.5, color="k")
            ax.set_title(s, fontsize=10)
            ax = axes[1, j]
            ax.bar(edges[:-1], counts, width=np.diff(edges), align="edge", color="0.6", edgecolor="none")
            ax = axes[2, j]
            ax.vlines(np.arange(r.size), 0, r, lw=0.6, color="k")
            ax.axhline(0.0, lw=0.5, color="0.5")
            ax.set_ylim(min(-0.1, r.min() - 0.05), 1.05)
            ax.set_xlabel("lag")
        axes[0, 0].set_ylabel(f"{var} (last {TAIL})")
        axes[1, 0].set_ylabel("density")
        axes[2, 0].set_ylabel("ACF")
        fig.tight_layout()
        path = directory / f"{var}.png"
        fig.savefig(path, dpi=100)
        plt.close(fig)
        written.append(path)
    return written
