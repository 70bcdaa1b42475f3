"""Benchmark report assembly: accuracy statistics, rank aggregation, and
delimited output files.

Metric tables are laid out with one row per (dataset, metric) pair and one
column per model; lower is better everywhere.  Displayed metrics carry 4
decimals and percentages 2 decimals.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


def improvement_pct(worse: float, better: float) -> float:
    """Percentage by which ``better`` undercuts ``worse``, rounded to 2
    decimals for display."""
    if not worse > 0:
        raise ValueError(f"baseline must be positive, got {worse}")
    return round(100.0 * (worse - better) / worse, 2)


def runtime_saving_pct(baseline: float, candidate: float) -> float:
    """Percentage of ``baseline`` seconds saved by ``candidate``, rounded
    to 2 decimals."""
    if not baseline > 0:
        raise ValueError(f"baseline must be positive, got {baseline}")
    return round(100.0 * (baseline - candidate) / baseline, 2)


def average_ranks(values) -> np.ndarray:
    """Ascending 1-based ranks of one table row; ties share the average of
    the ranks they span."""
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("ranks are undefined for non-finite values")
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def f_rank(table) -> np.ndarray:
    """Per-model mean of the per-row ranks of a (rows x models) metric
    table.  Lower means better; the values always average to
    (n_models + 1) / 2 across models."""
    table = np.asarray(table, dtype=np.float64)
    if table.ndim != 2 or table.shape[0] < 1:
        raise ValueError("metric table must be 2-d with at least one row")
    return np.vstack([average_ranks(row) for row in table]).mean(axis=0)


def win_loss(table, reference: int) -> list[tuple[int, int]]:
    """Per-column (wins, losses) of the reference model: a win is a row
    where the reference metric is strictly smaller, a loss one where it is
    strictly larger.  The reference column itself reads (0, 0)."""
    table = np.asarray(table, dtype=np.float64)
    if not 0 <= reference < table.shape[1]:
        raise ValueError(f"reference column {reference} out of range")
    ref = table[:, reference]
    return [(int(np.sum(ref < table[:, j])), int(np.sum(ref > table[:, j])))
            for j in range(table.shape[1])]


@dataclass
class ModelResult:
    """Evaluation of one model on one dataset."""

    model: str
    dataset: str
    rmse: float
    mae: float
    train_seconds: float
    refine_seconds: float


@dataclass
class EvalReport:
    """Collected results of one experiment plus per-model failures."""

    results: list[ModelResult] = field(default_factory=list)
    failures: dict[str, str] = field(default_factory=dict)

    def models(self) -> list[str]:
        seen = []
        for r in self.results:
            if r.model not in seen:
                seen.append(r.model)
        return seen

    def datasets(self) -> list[str]:
        seen = []
        for r in self.results:
            if r.dataset not in seen:
                seen.append(r.dataset)
        return seen

    def metric_table(self) -> tuple[list[str], list[str], np.ndarray]:
        """(row labels, model names, values) with one row per
        (dataset, metric) pair and one column per model."""
        models = self.models()
        labels = []
        rows = []
        by_key = {(r.dataset, r.model): r for r in self.results}
        for dataset in self.datasets():
            for metric in ("rmse", "mae"):
                labels.append(f"{dataset}/{metric}")
                rows.append([getattr(by_key[(dataset, m)], metric)
                             for m in models])
        return labels, models, np.asarray(rows, dtype=np.float64)

    def reference_model(self) -> str:
        """Model with the lowest mean rank (first listed wins ties)."""
        _, models, table = self.metric_table()
        ranks = f_rank(table)
        return models[int(np.argmin(ranks))]


def write_metrics_csv(report: EvalReport, path) -> None:
    """Accuracy table, 4 decimals.  Timing lives in ``timings.csv`` so this
    file is byte-identical across reruns of a seeded experiment."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "dataset", "rmse", "mae"])
        for r in report.results:
            writer.writerow([r.model, r.dataset, f"{r.rmse:.4f}", f"{r.mae:.4f}"])


def write_timings_csv(report: EvalReport, path) -> None:
    """Measured wall-clock seconds per model."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "dataset", "train_s", "refine_s"])
        for r in report.results:
            writer.writerow([r.model, r.dataset, f"{r.train_seconds:.6f}",
                             f"{r.refine_seconds:.6f}"])


def write_ranks_csv(report: EvalReport, path) -> None:
    """Per-model mean ranks plus the reference model's wins/losses against
    each column."""
    _, models, table = report.metric_table()
    ranks = f_rank(table)
    ref = models.index(report.reference_model())
    wl = win_loss(table, ref)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "f_rank", "ref_wins", "ref_losses"])
        for j, m in enumerate(models):
            writer.writerow([m, f"{ranks[j]:.4f}", wl[j][0], wl[j][1]])


def write_summary(report: EvalReport, path, config_lines: list[str]) -> None:
    """Plain-text summary: configuration echo, metric table, ranks, and
    pairwise improvement / runtime-saving percentages relative to the
    reference model."""
    labels, models, table = report.metric_table()
    ranks = f_rank(table)
    ref_name = report.reference_model()
    ref = models.index(ref_name)
    wl = win_loss(table, ref)
    times = {(r.dataset, r.model): r for r in report.results}

    lines = ["# configuration"]
    lines += config_lines
    lines.append("")
    lines.append("# metrics (lower is better)")
    lines.append("row," + ",".join(models))
    for label, row in zip(labels, table):
        lines.append(label + "," + ",".join(f"{v:.4f}" for v in row))
    lines.append("")
    lines.append("# aggregate statistics (reference: " + ref_name + ")")
    lines.append("f_rank," + ",".join(f"{v:.4f}" for v in ranks))
    lines.append("win_loss," + ",".join(f"{w}/{l}" for w, l in wl))
    lines.append("")
    lines.append(f"# improvement of {ref_name} per row (percent)")
    for label, row in zip(labels, table):
        pcts = []
        for j, m in enumerate(models):
            if j == ref:
                pcts.append("--")
            elif row[j] > 0:
                pcts.append(f"{improvement_pct(row[j], row[ref]):.2f}")
            else:
                pcts.append("n/a")
        lines.append(label + "," + ",".join(pcts))
    lines.append("")
    lines.append(f"# runtime saving of {ref_name} vs peers (percent of total seconds)")
    for dataset in report.datasets():
        ref_total = (times[(dataset, ref_name)].train_seconds
                     + times[(dataset, ref_name)].refine_seconds)
        for m in models:
            if m == ref_name:
                continue
            peer = times[(dataset, m)]
            total = peer.train_seconds + peer.refine_seconds
            if total > 0:
                lines.append(f"{dataset},{m},"
                             f"{runtime_saving_pct(total, ref_total):.2f}")
    for model, message in sorted(report.failures.items()):
        lines.append("")
        lines.append(f"# FAILED {model}: {message}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
