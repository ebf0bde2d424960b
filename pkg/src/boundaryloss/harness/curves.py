"""Validation-DSC learning curves as CSV plus an SVG line plot.

The CSV is long-format with columns ``series,epoch,val_dsc``: one series per
run (labelled by the caller, usually ``seed<k>``) and, for several runs, a
``mean`` series averaged over the runs that have a value at that epoch.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Dict, List, Mapping, Tuple, Union

import numpy as np

from ..exceptions import FormatError
from .logs import MetricsLog

CURVE_COLUMNS = ("series", "epoch", "val_dsc")
Series = Dict[str, Tuple[List[int], List[float]]]


def curve_series(logs: Mapping[str, MetricsLog]) -> Series:
    out: Series = {}
    for label, log in logs.items():
        out[label] = (log.column("epoch"), log.column("val_dsc"))
    if len(logs) > 1:
        by_epoch: Dict[int, List[float]] = {}
        for epochs, values in out.values():
            for e, v in zip(epochs, values):
                by_epoch.setdefault(e, []).append(v)
        epochs = sorted(by_epoch)
        out["mean"] = (epochs, [float(np.mean(by_epoch[e])) for e in epochs])
    return out


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else repr(float(v))


def write_curves_csv(series: Series, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for label, (epochs, values) in series.items():
            for e, v in zip(epochs, values):
                w.writerow([label, int(e), _fmt(v)])
    return path


def read_curves_csv(path) -> Series:
    out: Series = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CURVE_COLUMNS:
            raise FormatError(f"unexpected curve header {reader.fieldnames}")
        for r in reader:
            epochs, values = out.setdefault(r["series"], ([], []))
            epochs.append(int(r["epoch"]))
            values.append(float(r["val_dsc"]))
    return out


def plot_curves_svg(series: Series, path, title: str = "validation DSC") -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (epochs, values) in series.items():
        style = dict(color="black", linewidth=2.0) if label == "mean" else dict(linewidth=1.0, alpha=0.8)
        ax.plot(epochs, values, marker="o" if len(epochs) == 1 else None, label=label, **style)
    ax.set_xlabel("epoch")
    ax.set_ylabel("val DSC")
    ax.set_title(title)
    ax.set_ylim(0, 1)
    ax.legend(fontsize="small")
    fig.tight_layout()
    # A fixed hash salt keeps the SVG ids stable between runs.
    matplotlib.rcParams["svg.hashsalt"] = "boundaryloss"
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return Path(path)


def emit_curves(logs: Union[MetricsLog, Mapping[str, MetricsLog]], out_dir, name: str = "curves"):
    """Write ``<name>.csv`` and ``<name>.svg``; returns both paths."""
    if isinstance(logs, MetricsLog):
        logs = {"run": logs}
    if not logs or any(len(l) == 0 for l in logs.values()):
        raise ValueError("every log must have at least one row")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    series = curve_series(logs)
    csv_path = write_curves_csv(series, out_dir / f"{name}.csv")
    svg_path = plot_curves_svg(series, out_dir / f"{name}.svg")
    return csv_path, svg_path
