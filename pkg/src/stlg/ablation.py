"""Toggle-grid ablation: retrain under each mechanism subset, several seeds.

The grid switches the four semi-supervised mechanisms (pseudo labeling,
input perturbation, intra-modal and inter-modal contrast) on and off in the
combinations worth comparing; the baseline row degenerates to purely
supervised training on the labeled pool.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .config import TrainConfig
from .data import Dataset
from .evaluation import MetricTable, evaluate_model
from .models import build_model
from .trainer import SELECTION_METRIC, train

__all__ = ["TOGGLE_GRID", "AblationRow", "run_ablation", "summarize_ablation"]

TOGGLE_GRID: tuple[tuple[str, dict], ...] = (
    ("baseline", dict(use_pseudo=False, use_perturb=False, use_intra_cl=False, use_inter_cl=False)),
    ("pseudo", dict(use_pseudo=True, use_perturb=False, use_intra_cl=False, use_inter_cl=False)),
    ("pseudo+perturb", dict(use_pseudo=True, use_perturb=True, use_intra_cl=False, use_inter_cl=False)),
    ("pseudo+perturb+intra", dict(use_pseudo=True, use_perturb=True, use_intra_cl=True, use_inter_cl=False)),
    ("pseudo+inter", dict(use_pseudo=True, use_perturb=False, use_intra_cl=False, use_inter_cl=True)),
    ("pseudo+perturb+inter", dict(use_pseudo=True, use_perturb=True, use_intra_cl=False, use_inter_cl=True)),
    ("full", dict(use_pseudo=True, use_perturb=True, use_intra_cl=True, use_inter_cl=True)),
)


@dataclass(frozen=True)
class AblationRow:
    """Test metrics of one grid setting trained with one seed."""

    setting: str
    toggles: dict
    seed: int
    table: MetricTable


def run_ablation(
    config: TrainConfig,
    train_set: Dataset,
    val_set,
    test_set,
    seeds: Sequence[int] = (0, 1, 2),
    settings: Iterable[str] | None = None,
    callback: Callable[[str, int, MetricTable], None] | None = None,
) -> list[AblationRow]:
    """Train every (setting, seed) pair and evaluate the best student on test.

    `settings` restricts the grid to the named rows, preserving grid order.
    Without a validation set the final student is evaluated instead.
    """
    wanted = None if settings is None else set(settings)
    if wanted is not None:
        known = {name for name, _ in TOGGLE_GRID}
        unknown = sorted(wanted - known)
        if unknown:
            raise ValueError(f"unknown ablation settings: {', '.join(unknown)}")
    rows: list[AblationRow] = []
    for name, toggles in TOGGLE_GRID:
        if wanted is not None and name not in wanted:
            continue
        for seed in seeds:
            run_config = config.replace(seed=int(seed), **toggles)
            result = train(run_config, train_set, val_set)
            model = build_model(run_config)
            model.load_state_dict(result.best_student_state)
            table = evaluate_model(
                model,
                test_set,
                nms_threshold=run_config.nms_threshold,
                batch_size=run_config.batch_size,
            )
            rows.append(AblationRow(setting=name, toggles=dict(toggles), seed=int(seed), table=table))
            if callback is not None:
                callback(name, int(seed), table)
    return rows


def summarize_ablation(
    rows: Sequence[AblationRow], metric: tuple[int, float] = SELECTION_METRIC
) -> list[tuple[str, float]]:
    """Median of one recall entry per setting, in grid order."""
    order = [name for name, _ in TOGGLE_GRID]
    by_setting: dict[str, list[float]] = {}
    for row in rows:
        by_setting.setdefault(row.setting, []).append(row.table.get(*metric))
    summary = []
    for name in order:
        if name in by_setting:
            summary.append((name, float(statistics.median(by_setting[name]))))
    return summary
