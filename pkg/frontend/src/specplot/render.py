"""Render simulator CSV outputs into figures.

This package is a pure file-to-file transformation: it parses the CSV
schemas documented by the simulator and draws them, never recomputing any
dynamics.  Given the same input bytes and a pinned style, the output image
bytes are identical across runs.

Four plot kinds are supported:

``coefficients``    log-scale signal/spike/bulk coefficient curves plus the
                    network mass, from a trajectory CSV.
``loss_align``      loss (log scale) and alignment panels from a trajectory CSV.
``heatmap``         final alignment over the (eta, lambda) grid of a sweep CSV.
``stage_scaling``   stage times against dimension from a stage-study CSV.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["PlotJob", "SchemaError", "render", "read_csv", "PLOT_KINDS"]

REQUIRED_COLUMNS = {
    "coefficients": ("k", "a", "b", "c", "r"),
    "loss_align": ("k", "loss", "align"),
    "heatmap": ("eta", "lambda", "final_align"),
    "stage_scaling": ("d", "T1", "T2"),
}
PLOT_KINDS = tuple(REQUIRED_COLUMNS)

# Pinned style so identical inputs give identical image bytes.
STYLE = {
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


class SchemaError(ValueError):
    """The input CSV does not carry the columns the plot kind needs."""


@dataclass(frozen=True)
class PlotJob:
    input_csv: Path
    kind: str
    output_path: Path
    log_axes: bool = True

    def __post_init__(self):
        if self.kind not in PLOT_KINDS:
            raise ValueError(f"kind must be one of {PLOT_KINDS}, got {self.kind!r}")


def read_csv(path) -> dict:
    """Parse a simulator CSV: '#' comment lines, one header row, float cells.

    Empty cells (stage times never reached) become NaN; a file with no data
    rows raises SchemaError.
    """
    header = None
    rows = []
    with open(path, newline="") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if header is None:
                header = parts
            else:
                rows.append(parts)
    if header is None:
        raise SchemaError(f"{path}: no header row")
    if not rows:
        raise SchemaError(f"{path}: header only, nothing to plot")
    columns = {}
    for j, name in enumerate(header):
        values = []
        for row in rows:
            cell = row[j] if j < len(row) else ""
            if cell == "" or not _is_number(cell):
                values.append(np.nan)
            else:
                values.append(float(cell))
        columns[name] = np.asarray(values)
    return columns


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def _check_schema(columns: dict, kind: str, path):
    missing = [name for name in REQUIRED_COLUMNS[kind] if name not in columns]
    if missing:
        raise SchemaError(
            f"{path}: missing columns {missing} for kind '{kind}'; "
            f"found {sorted(columns)}")


def render(job: PlotJob) -> Path:
    """Draw the requested figure; returns the output path.

    Nothing is written when the input fails to parse or validate.
    """
    columns = read_csv(job.input_csv)
    _check_schema(columns, job.kind, job.input_csv)

    with plt.rc_context(STYLE):
        if job.kind == "coefficients":
            fig, labels = _plot_coefficients(columns, job.log_axes)
        elif job.kind == "loss_align":
            fig, labels = _plot_loss_align(columns, job.log_axes)
        elif job.kind == "heatmap":
            fig, labels = _plot_heatmap(columns, job.log_axes)
        else:
            fig, labels = _plot_stage_scaling(columns, job.log_axes)

        out = Path(job.output_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        metadata = {"Title": f"specplot:{job.kind}",
                    "Description": "axes=" + ";".join(labels)}
        fig.savefig(out, metadata=metadata)
        plt.close(fig)
    return out


def _plot_coefficients(columns, log_axes):
    fig, ax = plt.subplots(figsize=(6.0, 4.0), constrained_layout=True)
    k = columns["k"]
    for name, style in (("a", "-"), ("b", "--"), ("c", ":"), ("r", "-.")):
        ax.plot(k, columns[name], style, label=name)
    if log_axes:
        ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("coefficient")
    ax.legend(loc="best")
    return fig, ("step", "coefficient")


def _plot_loss_align(columns, log_axes):
    fig, (ax_loss, ax_align) = plt.subplots(
        1, 2, figsize=(9.0, 3.6), constrained_layout=True)
    k = columns["k"]
    ax_loss.plot(k, columns["loss"], "-")
    if log_axes:
        ax_loss.set_yscale("log")
    ax_loss.set_xlabel("step")
    ax_loss.set_ylabel("loss")
    ax_align.plot(k, columns["align"], "-")
    ax_align.set_xlabel("step")
    ax_align.set_ylabel("alignment")
    ax_align.set_ylim(0.0, 1.05)
    return fig, ("step", "loss", "alignment")


def _plot_heatmap(columns, log_axes):
    etas = np.unique(columns["eta"])
    lams = np.unique(columns["lambda"])
    grid = np.full((lams.size, etas.size), np.nan)
    for eta, lam, value in zip(columns["eta"], columns["lambda"],
                               columns["final_align"]):
        i = int(np.searchsorted(lams, lam))
        j = int(np.searchsorted(etas, eta))
        grid[i, j] = value

    fig, ax = plt.subplots(figsize=(5.4, 4.2), constrained_layout=True)
    mesh = ax.pcolormesh(etas, lams, grid, shading="nearest",
                         vmin=0.0, vmax=1.0, cmap="viridis")
    if log_axes:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel("η")
    ax.set_ylabel("λ")
    fig.colorbar(mesh, ax=ax, label="final alignment")
    return fig, ("η", "λ")


def _plot_stage_scaling(columns, log_axes):
    fig, ax = plt.subplots(figsize=(6.0, 4.0), constrained_layout=True)
    d = columns["d"]
    for name, marker in (("T1", "o"), ("T2", "s")):
        mask = np.isfinite(columns[name])
        ax.plot(d[mask], columns[name][mask], marker + "-", label=name)
    if log_axes:
        ax.set_xscale("log")
    ax.set_xlabel("d")
    ax.set_ylabel("steps")
    ax.legend(loc="best")
    return fig, ("d", "steps")
