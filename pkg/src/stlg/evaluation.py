"""Recall at rank n under an IoU threshold, over the standard (n, m) grid."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import torch

from .models import GroundingModel, ProposalModel, RegressionModel, collate
from .proposal import joint_score_and_select
from .temporal import ScoredSegment, TemporalSegment, iou

__all__ = ["RECALL_NS", "IOU_THRESHOLDS", "recall_at", "MetricTable", "evaluate_model"]

RECALL_NS = (1, 5)
IOU_THRESHOLDS = (0.1, 0.3, 0.5, 0.7)


def recall_at(
    predictions: Sequence[Sequence[ScoredSegment]],
    ground_truths: Sequence[TemporalSegment],
    n: int,
    m: float,
) -> float:
    """Percentage of queries whose top-n predictions contain IoU > m (strict)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 < m < 1:
        raise ValueError("IoU threshold must lie in (0, 1)")
    if len(predictions) != len(ground_truths) or not ground_truths:
        raise ValueError("need one nonempty prediction list per ground truth")
    hits = 0
    for preds, gt in zip(predictions, ground_truths):
        if not preds:
            raise ValueError("every query needs at least one prediction")
        if any(iou(p.segment, gt) > m for p in preds[:n]):
            hits += 1
    return 100.0 * hits / len(ground_truths)


@dataclass(frozen=True)
class MetricTable:
    """Recall values keyed by (n, m) over the full evaluation grid."""

    values: dict[tuple[int, float], float]

    def get(self, n: int, m: float) -> float:
        return self.values[(n, m)]

    def to_csv(self, path: str | Path) -> None:
        lines = ["n,iou,recall"]
        for (n, m) in sorted(self.values):
            lines.append(f"{n},{m:.1f},{self.values[(n, m)]:.6f}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_csv(cls, path: str | Path) -> "MetricTable":
        lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
        if not lines or lines[0] != "n,iou,recall":
            raise ValueError(f"unrecognized metric table header in {path}")
        values = {}
        for line in lines[1:]:
            n, m, v = line.split(",")
            values[(int(n), float(m))] = float(v)
        return cls(values)

    def as_text(self) -> str:
        ms = sorted({m for _, m in self.values})
        ns = sorted({n for n, _ in self.values})
        header = "        " + "".join(f"IoU={m:<7.1f}" for m in ms)
        rows = [header]
        for n in ns:
            cells = "".join(f"{self.values[(n, m)]:<11.2f}" for m in ms)
            rows.append(f"R@{n:<6d}{cells}")
        return "\n".join(rows)


def predict_segments(
    model: GroundingModel,
    samples: Sequence,
    nms_threshold: float = 0.5,
    top_n: int = max(RECALL_NS),
    batch_size: int = 32,
) -> list[list[ScoredSegment]]:
    """Ranked candidate lists per sample, by model type."""
    model.eval()
    out: list[list[ScoredSegment]] = []
    with torch.no_grad():
        for at in range(0, len(samples), batch_size):
            chunk = samples[at : at + batch_size]
            video, vmask, sent, smask = collate(chunk)
            if isinstance(model, RegressionModel):
                pred = model(video, vmask, sent, smask).prediction
                out.extend([[ScoredSegment(seg, 1.0)] for seg in pred.segments()])
            elif isinstance(model, ProposalModel):
                grid = model(video, vmask, sent, smask).grid
                for i in range(len(chunk)):
                    out.append(
                        joint_score_and_select(
                            grid,
                            model.anchors,
                            nms_threshold=nms_threshold,
                            top_n=top_n,
                            sample_index=i,
                        )
                    )
            else:
                raise TypeError(f"cannot predict with {type(model).__name__}")
    return out


def evaluate_model(
    model: GroundingModel,
    samples: Sequence,
    nms_threshold: float = 0.5,
    batch_size: int = 32,
) -> MetricTable:
    """Full (n, m) recall grid over the labeled samples of a dataset or sample list."""
    samples = [s for s in getattr(samples, "samples", samples) if s.label is not None]
    if not samples:
        raise ValueError("evaluation needs at least one labeled sample")
    preds = predict_segments(model, samples, nms_threshold=nms_threshold, batch_size=batch_size)
    gts = [s.label for s in samples]
    values = {
        (n, m): recall_at(preds, gts, n, m) for n in RECALL_NS for m in IOU_THRESHOLDS
    }
    return MetricTable(values)
