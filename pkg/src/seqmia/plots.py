"""Static SVG charts drawn from the CSV reports.

Figures are built with the object API (no pyplot state) so plotting is safe
from worker threads. A fixed hash salt and no date metadata keep the SVG bytes
stable for identical inputs.
"""

import csv
import math
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from .errors import FormatError
from .fileio import atomic_write
from .log import get_logger
from .report import read_csv

log = get_logger(__name__)

matplotlib.rcParams["svg.hashsalt"] = "seqmia"

Series = Dict[str, Tuple[List[float], List[float]]]


def _save(fig: Figure, path: Path) -> None:
    with atomic_write(Path(path), binary=True) as handle:
        fig.savefig(handle, format="svg", bbox_inches="tight", metadata={"Date": None})
    log.debug("wrote %s", path)


def _num(value: str) -> float:
    return float(value) if value != "" else math.nan


def plot_roc(curves: Dict[str, Tuple[np.ndarray, np.ndarray]], path: Path, title: str = "") -> None:
    """Log-log ROC curves with the random-guess diagonal."""
    fig = Figure(figsize=(5, 5))
    ax = fig.add_subplot()
    floor = 1.0
    for label, (fpr, tpr) in curves.items():
        fpr = np.asarray(fpr, dtype=float)
        tpr = np.asarray(tpr, dtype=float)
        positive = fpr[fpr > 0]
        if positive.size:
            floor = min(floor, float(positive.min()))
        ax.plot(fpr, tpr, label=label)
    floor = min(floor, 1e-3)
    ax.plot([floor, 1], [floor, 1], ls="--", color="gray", label="random guess")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlim(floor, 1)
    ax.set_ylim(floor, 1)
    ax.set_xlabel("False Positive Rate")
    ax.set_ylabel("True Positive Rate")
    if title:
        ax.set_title(title)
    ax.legend(loc="lower right", fontsize="small")
    _save(fig, path)


def plot_lines(
    panels: Dict[str, Series],
    path: Path,
    xlabel: str,
    ylabel: str,
    logx: bool = False,
    logy: bool = False,
) -> None:
    """One subplot per panel, one line per series."""
    fig = Figure(figsize=(5 * max(1, len(panels)), 4))
    for i, (name, series) in enumerate(panels.items(), start=1):
        ax = fig.add_subplot(1, len(panels), i)
        for label, (xs, ys) in sorted(series.items()):
            ax.plot(xs, ys, marker="o", markersize=3, label=label)
        if logx:
            ax.set_xscale("log", base=2)
        if logy:
            ax.set_yscale("log")
        ax.set_title(name)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize="x-small")
    _save(fig, path)


def plot_bars(values: Dict[str, Dict[str, float]], path: Path, ylabel: str) -> None:
    """Grouped bars: outer key is the group, inner key the bar."""
    groups = list(values)
    labels = sorted({label for inner in values.values() for label in inner})
    width = 0.8 / max(1, len(groups))
    fig = Figure(figsize=(max(5, 0.6 * len(labels) * max(1, len(groups))), 4))
    ax = fig.add_subplot()
    x = np.arange(len(labels))
    for i, group in enumerate(groups):
        heights = [values[group].get(label, math.nan) for label in labels]
        ax.bar(x + i * width, heights, width, label=group)
    ax.set_xticks(x + width * (len(groups) - 1) / 2)
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize="small")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize="small")
    _save(fig, path)


def plot_heatmap(matrix: np.ndarray, path: Path, title: str = "") -> None:
    fig = Figure(figsize=(5, 4.5))
    ax = fig.add_subplot()
    image = ax.imshow(np.asarray(matrix, dtype=float), cmap="viridis", interpolation="nearest")
    fig.colorbar(image, ax=ax)
    ax.set_xlabel("token")
    ax.set_ylabel("token")
    if title:
        ax.set_title(title)
    _save(fig, path)


def _covstudy_panels(rows: List[Dict[str, str]]) -> Dict[str, Series]:
    panels: Dict[str, Series] = defaultdict(lambda: defaultdict(lambda: ([], [])))
    for row in rows:
        xs, ys = panels[f"{row['class'].upper()} covariance"][f"{row['estimator']}-{row['pooling']}"]
        xs.append(_num(row["shadow_count"]))
        ys.append(_num(row["mean_error"]))
    return {name: dict(series) for name, series in sorted(panels.items())}


def _by_fpr_panels(rows: List[Dict[str, str]], x_column: str, label_columns: Sequence[str]) -> Dict[str, Series]:
    panels: Dict[str, Series] = defaultdict(lambda: defaultdict(lambda: ([], [])))
    for row in rows:
        label = "+".join(row[c] for c in label_columns)
        xs, ys = panels[f"TPR @ FPR {row['fpr']}"][label]
        xs.append(_num(row[x_column]))
        ys.append(_num(row["tpr"]))
    return {name: dict(series) for name, series in panels.items()}


def _is_matrix(path: Path) -> bool:
    with open(path, newline="", encoding="utf-8") as handle:
        first = next(csv.reader(handle), [])
    try:
        [float(v) for v in first]
    except ValueError:
        return False
    return bool(first)


def plot_report(inputs: Sequence[Path], out: Path) -> str:
    """Pick a chart for the report schema of the input CSV(s); returns the chart kind."""
    if not inputs:
        raise FormatError("plot needs at least one input CSV")
    first = Path(inputs[0])
    if _is_matrix(first):
        plot_heatmap(np.loadtxt(first, delimiter=",", ndmin=2), out, title=first.stem)
        return "heatmap"

    rows = read_csv(first)
    columns = set(rows[0]) if rows else set()
    if {"threshold", "fpr", "tpr"} <= columns:
        curves = {}
        for path in inputs:
            roc_rows = read_csv(path) if Path(path) != first else rows
            curves[Path(path).stem] = (
                np.array([_num(r["fpr"]) for r in roc_rows]),
                np.array([_num(r["tpr"]) for r in roc_rows]),
            )
        plot_roc(curves, out)
        return "roc"
    if len(inputs) > 1:
        log.warning("only ROC charts overlay several inputs; using %s", first)
    if {"estimator", "pooling", "class", "mean_error"} <= columns:
        plot_lines(_covstudy_panels(rows), out, "shadow models per class", "Frobenius error", logx=True, logy=True)
        return "covstudy"
    if {"reduction", "param", "tpr"} <= columns:
        plot_lines(_by_fpr_panels(rows, "param", ("variant", "reduction")), out, "reduced length", "TPR")
        return "reduce-sweep"
    if {"shadow_count", "tpr"} <= columns:
        plot_lines(_by_fpr_panels(rows, "shadow_count", ("variant",)), out, "shadow models", "TPR", logx=True)
        return "sweep"
    if {"variant", "fpr", "tpr"} <= columns:
        bars: Dict[str, Dict[str, float]] = defaultdict(dict)
        for row in rows:
            bars[f"FPR {row['fpr']}"][row["variant"]] = _num(row["tpr"])
        plot_bars(dict(bars), out, "TPR")
        return "compare"
    if {"scope", "auc"} <= columns:
        per_target = {row["scope"]: _num(row["auc"]) for row in rows if row["scope"] != "pooled"}
        plot_bars({"AUC": per_target}, out, "AUC")
        return "eval"
    raise FormatError(f"{first}: unrecognised report columns {sorted(columns)}")
