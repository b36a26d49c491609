"""Figure rendering for the experiment commands.

Every CLI command drops an SVG line plot next to its CSV output.
Rendering is deterministic: a fixed hash salt controls matplotlib's
generated element ids and the SVG date metadata is suppressed, so the
same inputs produce byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "superacc"

import matplotlib.pyplot as plt  # noqa: E402 (backend must be set first)

from .serialize import read_csv_columns  # noqa: E402


def plot_series(
    out_path,
    series,
    xlabel: str = "",
    ylabel: str = "",
    title: str = "",
    logy: bool = False,
) -> None:
    """Render named line series to an SVG file.

    `series` maps a legend label to an (x, y) pair.
    """
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for label, (x, y) in series.items():
        ax.plot(x, y, label=label, linewidth=1.2)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if series:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_csv(
    csv_path,
    x_column: str,
    y_columns,
    out_path,
    logy: bool = False,
    title: str = "",
) -> None:
    """Plot selected columns of a CSV file (one polyline per column)."""
    cols = read_csv_columns(csv_path)
    if x_column not in cols:
        raise ValueError(f"column {x_column!r} not in {csv_path}")
    missing = [c for c in y_columns if c not in cols]
    if missing:
        raise ValueError(f"columns {missing} not in {csv_path}")
    x = cols[x_column]
    series = {c: (x, cols[c]) for c in y_columns}
    plot_series(
        out_path, series, xlabel=x_column, ylabel="", title=title, logy=logy
    )
