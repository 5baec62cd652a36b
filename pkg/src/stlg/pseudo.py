"""Teacher predictions turned into student targets for both model families."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .proposal import AnchorSet, ProposalGrid, joint_score_and_select
from .temporal import TemporalSegment, iou_grid, segment_frame_mask

__all__ = [
    "RegressionPseudo",
    "ProposalPseudo",
    "regression_pseudo",
    "proposal_pseudo",
    "proposal_bits",
]


@dataclass(frozen=True)
class RegressionPseudo:
    segment: TemporalSegment
    attention_mask: np.ndarray  # (T,) 0/1


@dataclass(frozen=True)
class ProposalPseudo:
    segment: TemporalSegment
    anchor_mask: np.ndarray  # (T, K) 0/1
    boundary_mask: np.ndarray  # (T,) 0/1, at most two set bits


def regression_pseudo(segment: TemporalSegment, num_steps: int) -> RegressionPseudo:
    """Teacher segment kept verbatim; attention bits cover its grid span."""
    return RegressionPseudo(
        segment=segment, attention_mask=segment_frame_mask(segment, num_steps)
    )


def proposal_pseudo(
    teacher_grid: ProposalGrid,
    anchors: AnchorSet,
    nms_threshold: float = 0.5,
    sample_index: int = 0,
) -> ProposalPseudo:
    """Top-scored teacher proposal re-encoded as anchor/boundary bits.

    Anchor bits use iou >= 0.5 (inclusive) against the selected segment, in
    contrast to the strict > 0.5 used for ground-truth targets.
    """
    top = joint_score_and_select(
        teacher_grid, anchors, nms_threshold=nms_threshold, top_n=1, sample_index=sample_index
    )[0]
    segment = top.segment
    num_steps = int(teacher_grid.mask[sample_index].sum().item())
    anchor_mask, boundary_mask = proposal_bits(segment, anchors, num_steps)
    return ProposalPseudo(segment=segment, anchor_mask=anchor_mask, boundary_mask=boundary_mask)


def proposal_bits(
    segment: TemporalSegment, anchors: AnchorSet, num_steps: int
) -> tuple[np.ndarray, np.ndarray]:
    """Inclusive-IoU anchor bits and endpoint boundary bits on a given grid.

    The grid length may differ from the teacher's when the student consumes a
    time-scaled view; the segment stays in normalized coordinates.
    """
    starts, ends = anchors.segments(num_steps)
    anchor_mask = (iou_grid(starts, ends, segment) >= 0.5).astype(np.float32)
    boundary_mask = np.zeros(num_steps, dtype=np.float32)
    lo, hi = segment.grid_indices(num_steps)
    boundary_mask[lo] = 1.0
    boundary_mask[hi] = 1.0
    return anchor_mask, boundary_mask
