"""Road-subset evaluation metrics: MSE, naive MSE and R-squared.

The naive baseline predicts the subset-mean change for every segment, so its
MSE is the population variance of the targets within the subset. R-squared is
computed as 1 - predicted_mse / naive_mse with the same subset mean, which
makes the identity between the three reported numbers exact.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import MetricError, ParameterError

SUBSET_ORDER = (
    "All",
    "Trunk",
    "Primary",
    "Secondary",
    "Tertiary",
    "PolicyRoads",
    "NonPolicyRoads",
)

_SUBSET_LABELS = {
    "All": "All roads",
    "Trunk": "Trunk roads",
    "Primary": "Primary roads",
    "Secondary": "Secondary roads",
    "Tertiary": "Tertiary roads",
    "PolicyRoads": "Roads with policy in place",
    "NonPolicyRoads": "Roads without policy in place",
}


@dataclass
class SubsetMetrics:
    r_squared: float
    naive_mse: float
    predicted_mse: float
    node_count: int


@dataclass
class SubsetReport:
    rows: dict[str, SubsetMetrics] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


def mse(y: np.ndarray, y_hat: np.ndarray) -> float:
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise ParameterError(f"mse shape mismatch: {y.shape} vs {y_hat.shape}")
    if y.size == 0:
        raise ParameterError("mse of an empty subset is undefined")
    return float(np.mean((y - y_hat) ** 2))


def naive_mse(y: np.ndarray) -> float:
    """MSE of the constant subset-mean predictor (population variance)."""
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ParameterError("naive_mse of an empty subset is undefined")
    return float(np.mean((y - y.mean()) ** 2))


def r_squared_from_mse(naive: float, predicted: float) -> float:
    if naive <= 0:
        raise MetricError("r_squared undefined: naive MSE is zero (constant targets)")
    return 1.0 - predicted / naive

def r_squared(y: np.ndarray, y_hat: np.ndarray) -> float:
    y = np.asarray(y, dtype=float)
    if y.size < 2:
        raise ParameterError("r_squared needs at least two values")
    return r_squared_from_mse(naive_mse(y), mse(y, y_hat))


def subset_report(
    y: np.ndarray,
    y_hat: np.ndarray,
    road_classes: Sequence[str],
    policy_mask: np.ndarray,
) -> SubsetReport:
    """Metrics per road subset, each with its own subset-local mean baseline.

    Arrays must be aligned to the same node order; pooled evaluation simply
    concatenates node values across scenarios before calling this. Subsets
    that are empty or have constant targets are omitted with a warning.
    """
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    classes = np.asarray(road_classes)
    mask = np.asarray(policy_mask, dtype=bool)
    if not (y.shape == y_hat.shape and y.shape == classes.shape and y.shape == mask.shape):
        raise ParameterError("y, y_hat, road_classes and policy_mask must be aligned")

    selectors = {
        "All": np.ones_like(mask),
        "Trunk": classes == "Trunk",
        "Primary": classes == "Primary",
        "Secondary": classes == "Secondary",
        "Tertiary": classes == "Tertiary",
        "PolicyRoads": mask,
        "NonPolicyRoads": ~mask,
    }
    report = SubsetReport()
    for name in SUBSET_ORDER:
        sel = selectors[name]
        count = int(sel.sum())
        if count < 2:
            report.warnings.append(f"subset {name}: fewer than 2 nodes, row omitted")
            continue
        baseline = naive_mse(y[sel])
        if baseline <= 0:
            report.warnings.append(f"subset {name}: constant targets, row omitted")
            continue
        predicted = mse(y[sel], y_hat[sel])
        report.rows[name] = SubsetMetrics(
            r_squared=r_squared_from_mse(baseline, predicted),
            naive_mse=baseline,
            predicted_mse=predicted,
            node_count=count,
        )
    return report


def report_to_csv_text(report: SubsetReport) -> str:
    lines = ["subset,r2,naive_mse,predicted_mse,n"]
    for name in SUBSET_ORDER:
        row = report.rows.get(name)
        if row is None:
            continue
        lines.append(
            f"{name},{row.r_squared:.6f},{row.naive_mse:.6f},"
            f"{row.predicted_mse:.6f},{row.node_count}"
        )
    return "\n".join(lines) + "\n"


def save_report_csv(report: SubsetReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(report_to_csv_text(report))


def format_report(report: SubsetReport) -> str:
    """Human-readable table of the per-subset metrics."""
    header = f"{'Road subset':<34} {'R^2':>8} {'Naive MSE':>12} {'Predicted MSE':>14} {'n':>8}"
    lines = [header, "-" * len(header)]
    for name in SUBSET_ORDER:
        row = report.rows.get(name)
        if row is None:
            continue
        lines.append(
            f"{_SUBSET_LABELS[name]:<34} {row.r_squared:>8.2f} "
            f"{row.naive_mse:>12.2f} {row.predicted_mse:>14.2f} {row.node_count:>8d}"
        )
    for warning in report.warnings:
        lines.append(f"note: {warning}")
    return "\n".join(lines) + "\n"


def save_per_scenario_csv(rows: Sequence[Mapping[str, float]], path) -> None:
    """Per-scenario metric rows: scenario_id, mse, naive_mse, r2."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario_id", "mse", "naive_mse", "r2"])
        for row in rows:
            writer.writerow(
                [
                    row["scenario_id"],
                    f"{row['mse']:.6f}",
                    f"{row['naive_mse']:.6f}",
                    f"{row['r2']:.6f}",
                ]
            )
