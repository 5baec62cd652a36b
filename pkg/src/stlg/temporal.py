"""Temporal interval geometry: segments, IoU, grid projection, and NMS.

All segments live in normalized time [0, 1]; frame indices are derived views
obtained by projecting onto a grid of T timesteps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TemporalSegment",
    "ScoredSegment",
    "grid_index",
    "segment_frame_mask",
    "iou",
    "iou_grid",
    "nms",
]


@dataclass(frozen=True)
class TemporalSegment:
    """Closed interval [start, end] in normalized video time."""

    start: float
    end: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.start) and math.isfinite(self.end)):
            raise ValueError(f"segment endpoints must be finite, got [{self.start}, {self.end}]")
        if not 0.0 <= self.start <= self.end <= 1.0:
            raise ValueError(
                f"invalid segment [{self.start}, {self.end}]: need 0 <= start <= end <= 1"
            )

    @property
    def length(self) -> float:
        return self.end - self.start

    def grid_indices(self, num_steps: int) -> tuple[int, int]:
        """Project both endpoints onto a grid of `num_steps` frames."""
        return grid_index(self.start, num_steps), grid_index(self.end, num_steps)


@dataclass(frozen=True)
class ScoredSegment:
    """A candidate segment with a confidence score in [0, 1]."""

    segment: TemporalSegment
    score: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise ValueError(f"score must be finite in [0, 1], got {self.score}")


def grid_index(x: float, num_steps: int) -> int:
    """round(x * (num_steps - 1)) with half-up rounding, clipped to [0, num_steps - 1].

    Half-up (rather than banker's) rounding so that the projection is a
    monotone step function of x.
    """
    if num_steps < 1:
        raise ValueError(f"num_steps must be >= 1, got {num_steps}")
    idx = int(math.floor(x * (num_steps - 1) + 0.5))
    return min(max(idx, 0), num_steps - 1)


def segment_frame_mask(segment: TemporalSegment, num_steps: int) -> np.ndarray:
    """0/1 vector of length `num_steps`, 1 on frames covered by the segment.

    Frame t is covered iff grid_index(start) <= t <= grid_index(end); a
    zero-length segment still covers its single frame.
    """
    lo, hi = segment.grid_indices(num_steps)
    mask = np.zeros(num_steps, dtype=np.float32)
    mask[lo : hi + 1] = 1.0
    return mask


def iou(a: TemporalSegment, b: TemporalSegment) -> float:
    """Intersection over union of two 1-D intervals.

    Two identical zero-length segments denote the same instant and return 1;
    a zero-length segment against anything else returns 0 (no measure overlap).
    """
    inter = min(a.end, b.end) - max(a.start, b.start)
    if inter < 0.0:
        inter = 0.0
    union = a.length + b.length - inter
    if union <= 0.0:
        return 1.0 if a.start == b.start else 0.0
    return inter / union


def iou_grid(starts: np.ndarray, ends: np.ndarray, reference: TemporalSegment) -> np.ndarray:
    """Vectorized iou of many [starts, ends] intervals against one reference.

    Zero-length conventions match `iou`. Shapes of `starts` and `ends` must
    agree; the result has the same shape.
    """
    starts = np.asarray(starts, dtype=np.float64)
    ends = np.asarray(ends, dtype=np.float64)
    if starts.shape != ends.shape:
        raise ValueError(f"shape mismatch: starts {starts.shape} vs ends {ends.shape}")
    inter = np.clip(np.minimum(ends, reference.end) - np.maximum(starts, reference.start), 0.0, None)
    union = (ends - starts) + reference.length - inter
    out = np.zeros_like(inter)
    ok = union > 0.0
    out[ok] = inter[ok] / union[ok]
    # union == 0 means both intervals are zero-length; equal starts -> same instant
    out[~ok] = (starts[~ok] == reference.start).astype(np.float64)
    return out


def nms(
    candidates: list[ScoredSegment],
    iou_threshold: float,
    top_n: int,
) -> list[ScoredSegment]:
    """Greedy temporal non-maximum suppression.

    Candidates are visited in descending score order (ties: earlier start,
    then shorter length); a candidate is suppressed iff its IoU with any
    already-kept segment exceeds `iou_threshold`. At most `top_n` survivors
    are returned, in visit order.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    if top_n < 1:
        raise ValueError(f"top_n must be >= 1, got {top_n}")
    order = sorted(
        candidates,
        key=lambda c: (-c.score, c.segment.start, c.segment.length),
    )
    kept: list[ScoredSegment] = []
    for cand in order:
        if len(kept) >= top_n:
            break
        if all(iou(cand.segment, k.segment) <= iou_threshold for k in kept):
            kept.append(cand)
    return kept
