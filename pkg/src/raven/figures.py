"""Matplotlib renderings of the report outputs: distribution bar charts
and grouped recall-by-method bars, written to files next to the CSVs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .evalreport import EvalReport


def plot_histogram(pairs: list[tuple[str, int]], title: str, out_path, ylabel="count"):
    """Horizontal bar chart of a (label, count) histogram, largest first."""
    out_path = Path(out_path)
    labels = [p[0] for p in pairs]
    counts = [p[1] for p in pairs]
    height = max(2.0, 0.4 * len(labels) + 1.2)
    fig, ax = plt.subplots(figsize=(8, height))
    if labels:
        ax.barh(range(len(labels)), counts, color="#4878cf")
        ax.set_yticks(range(len(labels)))
        ax.set_yticklabels(labels)
        ax.invert_yaxis()
    ax.set_xlabel(ylabel)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def plot_recall(report: EvalReport, out_path):
    """Grouped bars: one group per entity type, one bar per method."""
    out_path = Path(out_path)
    methods = report.methods
    types = report.entity_types
    width = 0.8 / max(1, len(methods))
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for mi, method in enumerate(methods):
        xs = [ti + mi * width for ti in range(len(types))]
        ys = [report.cells[(method, t)]["recall"] or 0.0 for t in types]
        ax.bar(xs, ys, width=width, label=method)
    ax.set_xticks([ti + 0.4 - width / 2 for ti in range(len(types))])
    ax.set_xticklabels(types)
    ax.set_ylim(0, 1.0)
    ax.set_ylabel("recall")
    ax.set_title("Entity recall by method")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
