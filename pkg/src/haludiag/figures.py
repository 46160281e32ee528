"""Figure rendering for the report paths.

Every CLI report command writes PNG figures next to its delimited output:
dataset runs get context-length and difficulty distributions, evaluation runs
get metric bar charts.  Rendering always uses the Agg backend so it works
headless.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import DetectionReport, DiagnosisReportCard

_TASK_COLORS = {"Summary": "#4878a8", "Logical": "#e49444", "Math": "#6a9f58"}


def render_dataset_figures(records: Sequence[dict], outdir: str | Path) -> list[Path]:
    """Context-length histogram and per-task difficulty distribution."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []

    lengths = [len(r["context"]) for r in records]
    fig, ax = plt.subplots(figsize=(6, 4))
    if lengths:
        ax.hist(lengths, bins=min(30, max(5, len(set(lengths)))), color="#4878a8", edgecolor="white")
    ax.set_xlabel("context length (characters)")
    ax.set_ylabel("records")
    ax.set_title("Context length distribution")
    fig.tight_layout()
    path = outdir / "context_length.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    paths.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    by_task: dict[str, dict[int, int]] = {}
    for record in records:
        by_task.setdefault(record["task_type"], {})
        difficulty = int(record["difficulty"])
        by_task[record["task_type"]][difficulty] = by_task[record["task_type"]].get(difficulty, 0) + 1
    if by_task:
        all_difficulties = sorted({d for counts in by_task.values() for d in counts})
        width = 0.8 / max(1, len(by_task))
        for i, (task, counts) in enumerate(sorted(by_task.items())):
            xs = [d + i * width for d in all_difficulties]
            ys = [counts.get(d, 0) for d in all_difficulties]
            ax.bar(xs, ys, width=width, label=task, color=_TASK_COLORS.get(task))
        ax.set_xticks([d + 0.4 - width / 2 for d in all_difficulties])
        ax.set_xticklabels([str(d) for d in all_difficulties])
        ax.legend()
    ax.set_xlabel("difficulty (reasoning steps)")
    ax.set_ylabel("records")
    ax.set_title("Difficulty distribution by task type")
    fig.tight_layout()
    path = outdir / "difficulty_by_task.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    paths.append(path)
    return paths


def render_detection_figure(report: DetectionReport, outdir: str | Path) -> Path:
    """Grouped precision/recall/F1 bars per class plus the macro average."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    groups = ["Halu", "NonHalu", "macro"]
    series = {
        "precision": [report.halu_precision, report.nonhalu_precision, report.macro_p],
        "recall": [report.halu_recall, report.nonhalu_recall, report.macro_r],
        "f1": [report.halu_f1, report.nonhalu_f1, report.macro_f1],
    }
    fig, ax = plt.subplots(figsize=(6, 4))
    width = 0.25
    for i, (name, values) in enumerate(series.items()):
        ax.bar([x + i * width for x in range(len(groups))], values, width=width, label=name)
    ax.set_xticks([x + width for x in range(len(groups))])
    ax.set_xticklabels(groups)
    ax.set_ylim(0, 1.05)
    ax.axhline(report.accuracy, color="gray", linestyle="--", linewidth=1, label="accuracy")
    ax.legend()
    ax.set_title(f"Detection metrics (n={report.n})")
    fig.tight_layout()
    path = outdir / "detection_metrics.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_diagnosis_figure(card: DiagnosisReportCard, outdir: str | Path) -> Path:
    """Det-Acc / HR / SV / Mit bars with the uncorrected mitigation baseline."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    names = ["Det-Acc", "HR", "SV", "Mit"]
    values = [card.det_acc, card.hit_rate, card.span_validity, card.mitigation]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(names, values, color=["#4878a8", "#e49444", "#6a9f58", "#b55d60"])
    ax.axhline(
        card.original_mitigation, color="gray", linestyle="--", linewidth=1, label="Mit (uncorrected)"
    )
    ax.set_ylim(0, 1.05)
    ax.legend()
    ax.set_title(f"Diagnosis metrics (n={card.n})")
    fig.tight_layout()
    path = outdir / "diagnosis_metrics.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
