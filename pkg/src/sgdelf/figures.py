"""Figure rendering for benchmark reports.

Figures are written next to the delimited report files by the experiment
driver.  The Agg backend is forced so rendering works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .pretrain import EpochTrace
from .report import EvalReport

_BAR_STYLE = {"edgecolor": "black", "linewidth": 0.5}


def plot_accuracy(report: EvalReport, path) -> None:
    """Grouped bars of test RMSE and MAE per model."""
    labels, models, table = report.metric_table()
    x = np.arange(len(labels))
    width = 0.8 / max(len(models), 1)
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    for j, m in enumerate(models):
        ax.bar(x + (j - (len(models) - 1) / 2) * width, table[:, j],
               width, label=m, **_BAR_STYLE)
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylabel("error (lower is better)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_runtime(report: EvalReport, path) -> None:
    """Stacked bars of wall-clock training and refinement seconds."""
    models = report.models()
    train_s = np.array([sum(r.train_seconds for r in report.results
                            if r.model == m) for m in models])
    refine_s = np.array([sum(r.refine_seconds for r in report.results
                             if r.model == m) for m in models])
    x = np.arange(len(models))
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    ax.bar(x, train_s, 0.6, label="pre-train", **_BAR_STYLE)
    ax.bar(x, refine_s, 0.6, bottom=train_s, label="refine", **_BAR_STYLE)
    ax.set_xticks(x)
    ax.set_xticklabels(models)
    ax.set_ylabel("seconds")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_epoch_traces(traces: dict[str, list[EpochTrace]], path) -> None:
    """Validation RMSE per epoch for each pre-trained model."""
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    for name, trace in traces.items():
        ax.plot([t.epoch for t in trace], [t.valid_rmse for t in trace],
                marker=".", markersize=3, label=name)
    ax.set_xlabel("epoch")
    ax.set_ylabel("validation RMSE")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
