"""Plot per-worker throughput and dataflow traffic from a sweep CSV.

Usage: python scripts/plot_sweep.py sweep.csv --out sweep.png
"""

from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Tuple

import click
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from distflow.bench.results import read_rows  # noqa: E402

Series = Dict[str, List[Tuple[int, float]]]


def mean_by_scale(rows: List[dict], column: str) -> Series:
    """mode -> [(world_size, mean of column over ok rows)], sorted by world size."""
    sums: Dict[Tuple[str, int], List[float]] = defaultdict(list)
    for row in rows:
        if row["status"] != "ok":
            continue
        sums[(row["mode"], int(row["world_size"]))].append(float(row[column]))
    series: Series = defaultdict(list)
    for (mode, world_size), values in sorted(sums.items()):
        series[mode].append((world_size, sum(values) / len(values)))
    return series


def plot_series(ax, series: Series, ylabel: str, log: bool = False) -> None:
    for mode, points in sorted(series.items()):
        xs, ys = zip(*points)
        ax.plot(xs, ys, marker="o", label=mode)
    ax.set_xlabel("world size")
    ax.set_ylabel(ylabel)
    if log:
        ax.set_xscale("log", base=2)
        ax.set_yscale("log", base=2)
    ax.grid(True, alpha=0.3)
    ax.legend()


@click.command()
@click.argument("csv_path", type=click.Path(exists=True, path_type=Path))
@click.option("--out", "-o", type=click.Path(path_type=Path), default=None, help="Image path (default: <csv>.png)")
def main(csv_path: Path, out: Path):
    """Render throughput and traffic curves of a sweep."""
    rows = read_rows(csv_path)
    fig, axes = plt.subplots(1, 3, figsize=(15, 4))
    plot_series(axes[0], mean_by_scale(rows, "tokens_per_sec_per_worker"), "tokens/s per worker")
    plot_series(axes[1], mean_by_scale(rows, "controller_bytes"), "controller bytes", log=True)
    plot_series(axes[2], mean_by_scale(rows, "max_node_dataflow_bytes"), "max node dataflow bytes")
    fig.tight_layout()
    out = out or csv_path.with_suffix(".png")
    fig.savefig(out, dpi=160)
    plt.close(fig)
    click.echo(f"Wrote {out}")


if __name__ == "__main__":
    main()
