"""Proposal grounding head: anchors, weighted BCE losses, joint selection.

Anchors of K fixed widths end at every timestep; the head scores each anchor
and each timestep's boundary probability. Selection multiplies anchor
confidence by the geometric mean of the endpoint boundary probabilities and
runs temporal NMS.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .temporal import ScoredSegment, TemporalSegment, grid_index, iou_grid, nms

__all__ = [
    "AnchorSet",
    "ProposalGrid",
    "ClassWeights",
    "ProposalHead",
    "anchor_targets",
    "boundary_targets",
    "anchor_loss",
    "boundary_loss",
    "proposal_task_loss",
    "compute_class_weights",
    "joint_score_and_select",
    "DEFAULT_ANCHOR_WIDTHS",
]

BCE_EPS = 1e-8
DEFAULT_ANCHOR_WIDTHS = (1 / 16, 1 / 8, 1 / 4, 1 / 2)


@dataclass(frozen=True)
class AnchorSet:
    """K anchor widths (normalized lengths); anchors end at each timestep."""

    widths: tuple[float, ...] = DEFAULT_ANCHOR_WIDTHS

    def __post_init__(self) -> None:
        if len(self.widths) < 1:
            raise ValueError("anchor set needs at least one width")
        if any(not 0.0 < w <= 1.0 for w in self.widths):
            raise ValueError(f"anchor widths must lie in (0, 1], got {self.widths}")
        if any(b <= a for a, b in zip(self.widths, self.widths[1:])):
            raise ValueError(f"anchor widths must be strictly increasing, got {self.widths}")

    @property
    def count(self) -> int:
        return len(self.widths)

    def segments(self, num_steps: int) -> tuple[np.ndarray, np.ndarray]:
        """Normalized (starts, ends), each (T, K): anchor (t, k) = [t/(T-1) - w_k, t/(T-1)], clipped at 0."""
        if num_steps < 2:
            raise ValueError("anchor grid needs at least two timesteps")
        ends = np.repeat(
            (np.arange(num_steps) / (num_steps - 1))[:, None], self.count, axis=1
        )
        starts = np.clip(ends - np.asarray(self.widths)[None, :], 0.0, None)
        return starts, ends


@dataclass
class ProposalGrid:
    """Anchor confidences (B, T, K) and boundary probabilities (B, T), all in [0, 1]."""

    anchor_scores: torch.Tensor
    boundary_scores: torch.Tensor
    mask: torch.Tensor  # (B, T) bool


@dataclass(frozen=True)
class ClassWeights:
    """Positive/negative BCE weights; one positive weight per anchor scale."""

    pos: torch.Tensor  # (K,) for anchors, scalar tensor for boundaries
    neg: torch.Tensor

    def __post_init__(self) -> None:
        if not (torch.isfinite(self.pos).all() and torch.isfinite(self.neg).all()):
            raise ValueError("class weights must be finite")
        if (self.pos <= 0).any() or (self.neg <= 0).any():
            raise ValueError("class weights must be positive")


class ProposalHead(nn.Module):
    """Per-timestep linear heads with sigmoid outputs for anchors and boundaries."""

    def __init__(self, hidden_dim: int, num_anchors: int):
        super().__init__()
        self.anchor_fc = nn.Linear(hidden_dim, num_anchors)
        self.boundary_fc = nn.Linear(hidden_dim, 1)

    def forward(self, fused: torch.Tensor, mask: torch.Tensor) -> ProposalGrid:
        mask = mask.bool()
        c = torch.sigmoid(self.anchor_fc(fused)) * mask.unsqueeze(-1)
        b = torch.sigmoid(self.boundary_fc(fused)).squeeze(-1) * mask
        return ProposalGrid(anchor_scores=c, boundary_scores=b, mask=mask)


def anchor_targets(gt: TemporalSegment, anchors: AnchorSet, num_steps: int) -> np.ndarray:
    """(T, K) bits: 1 iff iou(anchor(t, k), gt) > 0.5 (strict)."""
    starts, ends = anchors.segments(num_steps)
    return (iou_grid(starts, ends, gt) > 0.5).astype(np.float32)


def boundary_targets(gt: TemporalSegment, num_steps: int) -> np.ndarray:
    """Length-T bits set at the grid-projected endpoints (one bit if they collide)."""
    out = np.zeros(num_steps, dtype=np.float32)
    lo, hi = gt.grid_indices(num_steps)
    out[lo] = 1.0
    out[hi] = 1.0
    return out


def _weighted_bce(
    targets: torch.Tensor,
    probs: torch.Tensor,
    pos_weight: torch.Tensor,
    neg_weight: torch.Tensor,
    eps: float = BCE_EPS,
) -> torch.Tensor:
    # clamp each log argument directly; clamp(max=1 - eps) is a no-op in float32
    pos = pos_weight * targets * torch.log(probs.clamp(min=eps))
    neg = neg_weight * (1.0 - targets) * torch.log((1.0 - probs).clamp(min=eps))
    return -(pos + neg)


def anchor_loss(
    targets: torch.Tensor, scores: torch.Tensor, weights: ClassWeights
) -> torch.Tensor:
    """Weighted BCE summed over all (t, k) cells; per-sample for batched input.

    targets/scores are (..., T, K); weights.pos is (K,), weights.neg scalar
    or (K,).
    """
    targets = torch.as_tensor(targets, dtype=scores.dtype, device=scores.device)
    if targets.shape != scores.shape:
        raise ValueError(f"target shape {tuple(targets.shape)} != score shape {tuple(scores.shape)}")
    cells = _weighted_bce(targets, scores, weights.pos, weights.neg)
    return cells.sum(dim=(-2, -1))


def boundary_loss(
    targets: torch.Tensor, probs: torch.Tensor, weights: ClassWeights
) -> torch.Tensor:
    """Weighted BCE summed over the T boundary positions; per-sample if batched."""
    targets = torch.as_tensor(targets, dtype=probs.dtype, device=probs.device)
    if targets.shape != probs.shape:
        raise ValueError(f"target shape {tuple(targets.shape)} != prob shape {tuple(probs.shape)}")
    cells = _weighted_bce(targets, probs, weights.pos, weights.neg)
    return cells.sum(dim=-1)


def proposal_task_loss(
    anchor_target: torch.Tensor,
    anchor_scores: torch.Tensor,
    boundary_target: torch.Tensor,
    boundary_probs: torch.Tensor,
    anchor_weights: ClassWeights,
    boundary_weights: ClassWeights,
    alpha_p: float = 1.0,
) -> torch.Tensor:
    """anchor_loss + alpha_p * boundary_loss, per sample."""
    return anchor_loss(anchor_target, anchor_scores, anchor_weights) + alpha_p * boundary_loss(
        boundary_target, boundary_probs, boundary_weights
    )


def compute_class_weights(
    targets: torch.Tensor, per_scale: bool = True, clamp_max: float = 100.0
) -> ClassWeights:
    """w+ = clamp(#neg / #pos, 1, clamp_max) per anchor scale, w- = 1.

    For anchor grids pass (..., T, K) targets with per_scale=True (default);
    the trailing axis is the scale axis and counts pool over everything else,
    i.e. over the whole batch. For boundary vectors (or to pool anchor counts
    across scales) pass per_scale=False, which yields one scalar weight over
    all positions.
    """
    targets = torch.as_tensor(targets, dtype=torch.float64)
    scaled = targets.ndim >= 2 and per_scale
    if scaled:
        flat = targets.reshape(-1, targets.shape[-1])
        pos = flat.sum(dim=0)
        neg = flat.shape[0] - pos
    else:
        pos = targets.sum().reshape(1)
        neg = torch.tensor([targets.numel()], dtype=torch.float64) - pos
    ratio = torch.where(pos > 0, neg / pos.clamp(min=1.0), torch.full_like(pos, clamp_max))
    w_pos = ratio.clamp(min=1.0, max=clamp_max)
    if scaled:
        return ClassWeights(pos=w_pos, neg=torch.ones_like(w_pos))
    return ClassWeights(pos=w_pos.squeeze(0), neg=torch.tensor(1.0, dtype=torch.float64))


def joint_score_and_select(
    grid: ProposalGrid,
    anchors: AnchorSet,
    nms_threshold: float = 0.5,
    top_n: int = 5,
    sample_index: int = 0,
) -> list[ScoredSegment]:
    """Score every anchor by c * sqrt(b_start * b_end) and run NMS.

    Operates on one sample of the (possibly batched) grid; only anchors whose
    end timestep is valid participate.
    """
    c = grid.anchor_scores[sample_index].detach().cpu().numpy()
    b = grid.boundary_scores[sample_index].detach().cpu().numpy()
    valid = grid.mask[sample_index].detach().cpu().numpy().astype(bool)
    num_steps = int(valid.sum())
    if num_steps < 2:
        raise ValueError("joint selection needs at least two valid timesteps")
    c, b = c[:num_steps], b[:num_steps]
    starts, ends = anchors.segments(num_steps)
    candidates = []
    for t in range(num_steps):
        for k in range(anchors.count):
            seg = TemporalSegment(float(starts[t, k]), float(ends[t, k]))
            s_idx = grid_index(seg.start, num_steps)
            e_idx = grid_index(seg.end, num_steps)
            score = float(c[t, k] * np.sqrt(max(b[s_idx] * b[e_idx], 0.0)))
            candidates.append(ScoredSegment(seg, min(max(score, 0.0), 1.0)))
    return nms(candidates, nms_threshold, top_n)
