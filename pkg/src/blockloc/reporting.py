"""Result emission: CSV, gnuplot-style series data, and rendered figures."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

from blockloc.experiment import CellResult
from blockloc.netsim import Mode

CSV_HEADER = "anchor_rate,malicious_rate,mode,mean_error_m,stddev_m,mean_localized,mean_rejected"


def _sorted_cells(results: Sequence[CellResult]) -> list[CellResult]:
    return sorted(results, key=lambda c: (c.anchor_rate, c.malicious_rate, c.mode.value))


def _csv_row(cell: CellResult) -> str:
    return (
        f"{cell.anchor_rate:.2f},{cell.malicious_rate:.2f},{cell.mode.value},"
        f"{cell.mean_over_runs:.4f},{cell.stddev_over_runs:.4f},"
        f"{cell.mean_localized:.2f},{cell.mean_rejected:.2f}"
    )


def emit_csv(results: Sequence[CellResult], path: str | Path) -> None:
    """Write one row per cell, sorted by (anchor_rate, malicious_rate, mode)."""
    if not results:
        raise ValueError("no results to write")
    lines = [CSV_HEADER]
    lines.extend(_csv_row(cell) for cell in _sorted_cells(results))
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc


def read_csv(path: str | Path) -> list[CellResult]:
    """Parse a file written by emit_csv back into cell results."""
    with open(path, newline="") as handle:
        rows = list(csv.DictReader(handle))
    return [
        CellResult(
            anchor_rate=float(row["anchor_rate"]),
            malicious_rate=float(row["malicious_rate"]),
            mode=Mode(row["mode"]),
            mean_over_runs=float(row["mean_error_m"]),
            stddev_over_runs=float(row["stddev_m"]),
            mean_localized=float(row["mean_localized"]),
            mean_rejected=float(row["mean_rejected"]),
        )
        for row in rows
    ]


def _series(results: Sequence[CellResult]) -> list[tuple[tuple[float, Mode], list[CellResult]]]:
    """Cells grouped into (anchor_rate, mode) series, points sorted by malicious rate."""
    keys = sorted({(c.anchor_rate, c.mode) for c in results}, key=lambda k: (k[0], k[1].value))
    return [
        (key, sorted((c for c in results if (c.anchor_rate, c.mode) == key),
                     key=lambda c: c.malicious_rate))
        for key in keys
    ]


def emit_plot_data(results: Sequence[CellResult], path: str | Path) -> None:
    """Write gnuplot-consumable series: malicious_rate, mean error, stddev columns.

    One series per (anchor rate, mode), separated by blank lines, each headed
    by a '#' comment naming the series. Requires at least two malicious rates.
    """
    if len({c.malicious_rate for c in results}) < 2:
        raise ValueError("plot data needs results for at least two malicious rates")
    chunks = []
    for (anchor_rate, mode), cells in _series(results):
        lines = [f"# anchor_rate={anchor_rate:.2f} mode={mode.value}"]
        lines.extend(
            f"{c.malicious_rate:.2f} {c.mean_over_runs:.4f} {c.stddev_over_runs:.4f}"
            for c in cells
        )
        chunks.append("\n".join(lines))
    try:
        Path(path).write_text("\n\n".join(chunks) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write plot data to {path}: {exc}") from exc


def render_figure(results: Sequence[CellResult], path: str | Path) -> None:
    """Render the error-vs-malicious-rate curves to an image file."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for (anchor_rate, mode), cells in _series(results):
        rates = [c.malicious_rate for c in cells]
        errors = [c.mean_over_runs for c in cells]
        spreads = [c.stddev_over_runs for c in cells]
        style = "-o" if mode is Mode.SECURE else "--s"
        ax.errorbar(
            rates,
            errors,
            yerr=spreads,
            fmt=style,
            capsize=3,
            label=f"{mode.value}, anchors {anchor_rate:.0%}",
        )
    ax.set_xlabel("malicious node rate")
    ax.set_ylabel("mean localization error (m)")
    ax.set_title("Localization error vs malicious node rate")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    try:
        fig.savefig(path, dpi=150)
    finally:
        plt.close(fig)
