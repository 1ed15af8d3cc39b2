"""Report emission with fixed precision.

Every report is written twice: a human-readable text table and a
line-delimited JSON mirror with identical values.  Metric scores are
reported multiplied by 100 with two decimals, p-values with four
significant digits, and other fractions with four decimals, so repeated
runs produce byte-identical files.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .evaluation import (
    MetricSignificance,
    NoveltyReport,
    OverlapStats,
    RecallCurve,
    SubsampleCurve,
)

__all__ = [
    "format_score",
    "format_pvalue",
    "format_fraction",
    "ReportWriter",
    "metric_table_rows",
    "gain_rows",
    "recall_rows",
    "significance_rows",
    "overlap_rows",
    "novelty_rows",
    "utilization_rows",
    "subsample_rows",
    "correlation_rows",
]


def format_score(value: float) -> str:
    """Metric value on the [0, 1] scale, reported as 100x with 2 decimals."""
    return f"{100.0 * value:.2f}"


def format_pvalue(value: float) -> str:
    return f"{value:.4g}"


def format_fraction(value: float) -> str:
    """Plain fraction (gate weights, correlations) at 4 decimals."""
    return "nan" if math.isnan(value) else f"{value:.4f}"


@dataclass(frozen=True)
class ReportWriter:
    """Writes ``<name>.txt`` and its ``<name>.jsonl`` mirror into a
    directory, creating it on first use."""

    out_dir: str

    def emit(self, name: str, title: str, rows: Sequence[Mapping]) -> tuple[str, str]:
        os.makedirs(self.out_dir, exist_ok=True)
        txt_path = os.path.join(self.out_dir, f"{name}.txt")
        jsonl_path = os.path.join(self.out_dir, f"{name}.jsonl")
        with open(txt_path, "w", encoding="utf-8") as handle:
            handle.write(title + "\n")
            for row in rows:
                handle.write(
                    "  ".join(f"{key}={row[key]}" for key in row) + "\n"
                )
        with open(jsonl_path, "w", encoding="utf-8") as handle:
            for row in rows:
                handle.write(json.dumps(dict(row), sort_keys=True) + "\n")
        return txt_path, jsonl_path

    def notice(self, name: str, title: str, message: str) -> tuple[str, str]:
        return self.emit(name, title, [{"notice": message}])


def metric_table_rows(means: Mapping[str, float]) -> list[dict]:
    return [{"metric": m, "score": format_score(v)} for m, v in means.items()]


def gain_rows(
    system: Mapping[str, float],
    best_base: Mapping[str, float],
    gain: float,
) -> list[dict]:
    rows = [
        {
            "metric": m,
            "system": format_score(system[m]),
            "best_baseline": format_score(best_base[m]),
        }
        for m in system
    ]
    rows.append({"metric": "mean_relative_gain_pct", "value": f"{gain:.2f}"})
    return rows


def recall_rows(curve: RecallCurve) -> list[dict]:
    return [
        {
            "k": k,
            "model": format_score(m),
            "random": format_score(r),
            "base_order": format_score(b),
        }
        for k, m, r, b in zip(
            curve.thresholds, curve.model, curve.random, curve.base_order
        )
    ]


def significance_rows(
    report: Mapping[str, MetricSignificance], alpha: float
) -> list[dict]:
    rows = []
    for metric, entry in report.items():
        row: dict = {"metric": metric, "alpha": format_pvalue(alpha)}
        for method in sorted(entry.p_values):
            row[f"p_{method}"] = format_pvalue(entry.p_values[method])
        row["significant"] = entry.significant
        rows.append(row)
    return rows


def overlap_rows(stats: OverlapStats) -> list[dict]:
    return [
        {
            "picks_base_pct": format_score(stats.frac_picks_base),
            "picks_best_pct": format_score(stats.frac_picks_best),
        }
    ]


def novelty_rows(reports: Mapping[str, NoveltyReport]) -> list[dict]:
    rows = []
    for system, report in reports.items():
        for n in report.n_values:
            value = report.mean_fractions[n]
            rows.append(
                {
                    "system": system,
                    "n": n,
                    "novel_pct": "nan" if math.isnan(value) else format_score(value),
                    "skipped": report.skipped[n],
                    "total": report.total,
                }
            )
    return rows


def utilization_rows(matrix: np.ndarray, metric_names: Sequence[str]) -> list[dict]:
    rows = []
    for k, metric in enumerate(metric_names):
        row: dict = {"metric": metric}
        for e in range(matrix.shape[1]):
            row[f"expert{e}"] = format_fraction(float(matrix[k, e]))
        rows.append(row)
    return rows


def subsample_rows(curve: SubsampleCurve) -> list[dict]:
    rows = []
    for j, k in enumerate(curve.ks):
        row: dict = {"k": k}
        for metric, values in curve.values.items():
            row[metric] = format_score(values[j])
        rows.append(row)
    return rows


def correlation_rows(matrix: np.ndarray, metrics: Sequence[str]) -> list[dict]:
    rows = []
    for i, metric in enumerate(metrics):
        row: dict = {"metric": metric}
        for j, other in enumerate(metrics):
            row[other] = format_fraction(float(matrix[i, j]))
        rows.append(row)
    return rows
