"""SVG figures rendered from the CSV files an experiment writes.

Every figure reads only files already in the output directory, so a plot
never shows anything the data files do not contain. SVG output is made
byte-stable by dropping the date stamp and fixing the id hash salt.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
from matplotlib.figure import Figure  # noqa: E402

import numpy as np  # noqa: E402

STYLE = {
    "svg.hashsalt": "driftflow",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.2,
}
PRIOR_COLOR = "#1f77b4"
POSTERIOR_COLOR = "#17becf"
REFERENCE_COLOR = "#2ca02c"
FLOW_COLOR = "#d62728"


def read_columns(path: Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {}
    out = {}
    for key in rows[0]:
        try:
            out[key] = np.array([float(r[key]) for r in rows])
        except ValueError:
            out[key] = np.array([r[key] for r in rows])
    return out


def _save(fig: Figure, path: Path) -> Path:
    with matplotlib.rc_context(STYLE):
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    return path


def _new_figure(width=6.4, height=3.2, ncols=1) -> tuple[Figure, list]:
    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(width, height), layout="constrained")
        axes = [fig.add_subplot(1, ncols, i + 1) for i in range(ncols)]
    return fig, axes


def _stems(ax, x, w, color, label):
    ax.vlines(x, 0, w, colors=color, linewidth=1.0, label=label)
    ax.plot(x, w, "o", color=color, markersize=2.5)


def plot_particles(out_dir: Path) -> Path:
    """Prior and posterior Dirac mixtures over the oracle posterior density."""
    prior = read_columns(out_dir / "prior.csv")
    post = read_columns(out_dir / "posterior.csv")
    fig, (ax_p, ax_e) = _new_figure(ncols=2)
    with matplotlib.rc_context(STYLE):
        _stems(ax_p, prior["x1"], prior["w"], PRIOR_COLOR, "prior particles")
        ax_p.set_title("prior")
        _stems(ax_e, post["x1"], post["w"], POSTERIOR_COLOR, "flow posterior")
        oracle_path = out_dir / "oracle.csv"
        if oracle_path.exists():
            grid = read_columns(oracle_path)
            twin = ax_e.twinx()
            twin.plot(grid["x"], grid["pdf"], color=PRIOR_COLOR, label="oracle density")
            twin.set_ylim(bottom=0)
            twin.set_ylabel("density")
            lo, hi = np.interp([1e-4, 1 - 1e-4], grid["cdf"], grid["x"])
            ax_e.set_xlim(min(lo, post["x1"].min()) - 0.1, max(hi, post["x1"].max()) + 0.1)
        ax_e.set_title("posterior")
        for ax in (ax_p, ax_e):
            ax.set_xlabel("x")
            ax.set_ylim(bottom=0)
        ax_p.set_ylabel("weight")
    return _save(fig, out_dir / "plot_particles.svg")


def plot_map(out_dir: Path) -> Path:
    curve = read_columns(out_dir / "map_curve.csv")
    fig, (ax,) = _new_figure(width=4.0, height=3.4)
    with matplotlib.rc_context(STYLE):
        ax.plot(curve["x"], curve["reference"], color=REFERENCE_COLOR, label="reference map")
        ax.plot(curve["x"], curve["flow"], color=FLOW_COLOR, linestyle="--", label="flow map")
        ax.set_xlabel("prior x")
        ax.set_ylabel("posterior M(x)")
        ax.legend(frameon=False)
    return _save(fig, out_dir / "plot_map.svg")


def plot_flow(out_dir: Path) -> Path:
    """Particle locations after each sub-step."""
    data = read_columns(out_dir / "flow.csv")
    fig, (ax,) = _new_figure(width=4.0, height=3.4)
    steps = data["step"].astype(int)
    idx = data["particle"].astype(int)
    with matplotlib.rc_context(STYLE):
        for i in np.unique(idx):
            sel = idx == i
            ax.plot(data["x"][sel], steps[sel], color=POSTERIOR_COLOR, linewidth=0.6)
        ax.set_xlabel("x")
        ax.set_ylabel("sub-step")
        ax.set_yticks(np.unique(steps))
    return _save(fig, out_dir / "plot_flow.svg")


def plot_sir(out_dir: Path) -> Path:
    """W1 of every SIR run against L, with the deterministic flow as a line."""
    runs = read_columns(out_dir / "sir_runs.csv")
    fig, (ax,) = _new_figure(width=4.4, height=3.2)
    method = runs["method"]
    sir = method == "sir"
    with matplotlib.rc_context(STYLE):
        ax.plot(runs["L"][sir], runs["w1"][sir], "o", color=PRIOR_COLOR, markersize=3, label="SIR runs")
        flow = ~sir
        if np.any(flow):
            ax.axhline(runs["w1"][flow][0], color=FLOW_COLOR, label="flow")
        ax.set_xscale("log")
        ax.set_xlabel("L")
        ax.set_ylabel("W1 to oracle posterior")
        ax.legend(frameon=False)
    return _save(fig, out_dir / "plot_sir.svg")
