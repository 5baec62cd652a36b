"""Report rendering: delimited result files plus the figures beside them.

Everything draws through the object-oriented matplotlib API so no backend or
display is ever needed; all figures land as PNG files next to the CSVs.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

from matplotlib.figure import Figure

from .ablation import AblationRow
from .evaluation import IOU_THRESHOLDS, RECALL_NS, MetricTable
from .trainer import EpochRecord, write_history_csv

__all__ = [
    "plot_loss_curves",
    "plot_recall_curves",
    "plot_metric_table",
    "plot_ablation",
    "write_ablation_csv",
    "write_ablation_summary_csv",
    "render_training_report",
    "render_ablation_report",
]

DPI = 120
TOGGLE_COLUMNS = ("use_pseudo", "use_perturb", "use_intra_cl", "use_inter_cl")


def _metric_columns() -> list[str]:
    return [f"r{n}_iou{m:.1f}" for n in RECALL_NS for m in IOU_THRESHOLDS]


def _new_axes(figsize=(7.0, 4.5)):
    fig = Figure(figsize=figsize)
    return fig, fig.subplots()


def _save(fig: Figure, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    return path


def plot_loss_curves(history: Sequence[EpochRecord], path: str | Path) -> Path:
    """Task/self/total loss per epoch with the phase boundary marked."""
    if not history:
        raise ValueError("history is empty, nothing to plot")
    epochs = [r.epoch for r in history]
    fig, ax = _new_axes()
    ax.plot(epochs, [r.loss_task for r in history], marker="o", label="task")
    ax.plot(epochs, [r.loss_self for r in history], marker="s", label="self-supervised")
    ax.plot(epochs, [r.loss_all for r in history], marker="^", label="total")
    semi_epochs = [r.epoch for r in history if r.phase == "semi"]
    if semi_epochs and semi_epochs[0] > epochs[0]:
        ax.axvline(semi_epochs[0] - 0.5, color="gray", linestyle="--", linewidth=1)
        ax.text(
            semi_epochs[0] - 0.5, ax.get_ylim()[1], " semi phase", va="top", fontsize=8, color="gray"
        )
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_recall_curves(history: Sequence[EpochRecord], path: str | Path, n: int = 1) -> Path:
    """Validation R@n per IoU threshold over epochs."""
    rows = [r for r in history if r.metrics]
    if not rows:
        raise ValueError("no validation metrics recorded in this history")
    fig, ax = _new_axes()
    for m in IOU_THRESHOLDS:
        ax.plot(
            [r.epoch for r in rows],
            [r.metrics[(n, m)] for r in rows],
            marker="o",
            label=f"IoU={m:.1f}",
        )
    ax.set_xlabel("epoch")
    ax.set_ylabel(f"R@{n} (%)")
    ax.set_ylim(-2, 102)
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_metric_table(table: MetricTable, path: str | Path) -> Path:
    """Grouped bars: one group per IoU threshold, one bar per recall depth."""
    fig, ax = _new_axes()
    width = 0.8 / len(RECALL_NS)
    for j, n in enumerate(RECALL_NS):
        xs = [i + j * width for i in range(len(IOU_THRESHOLDS))]
        ax.bar(xs, [table.get(n, m) for m in IOU_THRESHOLDS], width=width, label=f"R@{n}")
    ax.set_xticks([i + width * (len(RECALL_NS) - 1) / 2 for i in range(len(IOU_THRESHOLDS))])
    ax.set_xticklabels([f"IoU={m:.1f}" for m in IOU_THRESHOLDS])
    ax.set_ylabel("recall (%)")
    ax.set_ylim(0, 102)
    ax.legend()
    ax.grid(axis="y", alpha=0.3)
    return _save(fig, path)


def plot_ablation(
    summary: Sequence[tuple[str, float]], path: str | Path, metric_label: str = "R@1, IoU=0.5"
) -> Path:
    """Horizontal bars of the per-setting medians, grid order top to bottom."""
    if not summary:
        raise ValueError("ablation summary is empty")
    names = [name for name, _ in summary]
    values = [value for _, value in summary]
    fig, ax = _new_axes(figsize=(7.0, 0.6 * len(names) + 1.5))
    ys = range(len(names))
    ax.barh(ys, values)
    ax.set_yticks(list(ys))
    ax.set_yticklabels(names)
    ax.invert_yaxis()
    ax.set_xlabel(f"median {metric_label} (%)")
    for y, v in zip(ys, values):
        ax.text(v, y, f" {v:.1f}", va="center", fontsize=8)
    ax.grid(axis="x", alpha=0.3)
    return _save(fig, path)


def write_ablation_csv(rows: Sequence[AblationRow], path: str | Path) -> Path:
    """One row per (setting, seed) with toggle flags and the full recall grid."""
    columns = ["setting", "seed", *TOGGLE_COLUMNS, *_metric_columns()]
    lines = [",".join(columns)]
    for row in rows:
        cells = [row.setting, str(row.seed)]
        cells += ["1" if row.toggles[t] else "0" for t in TOGGLE_COLUMNS]
        cells += [f"{row.table.get(n, m):.6f}" for n in RECALL_NS for m in IOU_THRESHOLDS]
        lines.append(",".join(cells))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_ablation_summary_csv(
    summary: Sequence[tuple[str, float]], path: str | Path
) -> Path:
    lines = ["setting,median_r1_iou0.5"]
    for name, value in summary:
        lines.append(f"{name},{value:.6f}")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def render_training_report(
    history: Sequence[EpochRecord],
    out_dir: str | Path,
    table: MetricTable | None = None,
) -> list[Path]:
    """History CSV plus loss/recall figures; test metrics when provided."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    write_history_csv(history, out_dir / "history.csv")
    written.append(out_dir / "history.csv")
    written.append(plot_loss_curves(history, out_dir / "loss_curves.png"))
    if any(r.metrics for r in history):
        written.append(plot_recall_curves(history, out_dir / "val_recall.png"))
    if table is not None:
        table.to_csv(out_dir / "test_metrics.csv")
        written.append(out_dir / "test_metrics.csv")
        written.append(plot_metric_table(table, out_dir / "test_metrics.png"))
    return written


def render_ablation_report(
    rows: Sequence[AblationRow],
    summary: Sequence[tuple[str, float]],
    out_dir: str | Path,
) -> list[Path]:
    """Per-run CSV, per-setting medians, and the comparison chart."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [
        write_ablation_csv(rows, out_dir / "ablation.csv"),
        write_ablation_summary_csv(summary, out_dir / "ablation_summary.csv"),
        plot_ablation(summary, out_dir / "ablation.png"),
    ]
    return written
