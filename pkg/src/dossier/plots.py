"""Figure rendering for bench reports (headless matplotlib)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def plot_task_counts(records: list[dict], path: str | Path) -> Path:
    """Grouped bars: actions and information units per task."""
    path = Path(path)
    labels = [r["task_id"] for r in records]
    actions = [r["action_count"] for r in records]
    units = [r["unit_count"] for r in records]
    x = range(len(labels))
    fig, ax = plt.subplots(figsize=(max(6, len(labels) * 1.2), 4))
    ax.bar([i - 0.2 for i in x], actions, width=0.4, label="actions", color="#4878cf")
    ax.bar([i + 0.2 for i in x], units, width=0.4, label="units", color="#6acc65")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel("count")
    ax.set_title("actions and information units per task")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_context_footprint(records: list[dict], path: str | Path) -> Path:
    """Per-task peak rendered-context estimate and minimized-unit count."""
    path = Path(path)
    labels = [r["task_id"] for r in records]
    peaks = [r["peak_context_estimate"] for r in records]
    minimized = [r["minimized_units"] for r in records]
    x = list(range(len(labels)))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(max(8, len(labels) * 2), 4))
    ax1.bar(x, peaks, color="#d65f5f")
    ax1.set_xticks(x)
    ax1.set_xticklabels(labels, rotation=30, ha="right")
    ax1.set_ylabel("token estimate")
    ax1.set_title("peak rendered context")
    ax2.bar(x, minimized, color="#956cb4")
    ax2.set_xticks(x)
    ax2.set_xticklabels(labels, rotation=30, ha="right")
    ax2.set_ylabel("units")
    ax2.set_title("minimized units at finish")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
