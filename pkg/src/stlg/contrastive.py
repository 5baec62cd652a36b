"""Margin-based contrastive losses over pooled unit-norm embeddings.

Matched pairs are pulled together and in-batch negatives pushed apart with a
cosine-similarity hinge: inter-modal pairs a video with its sentence,
intra-modal pairs two perturbation views of the same video.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

__all__ = [
    "EmbeddingBatch",
    "contrastive_loss",
    "inter_modal_loss",
    "intra_modal_loss",
    "self_supervised_loss",
]

UNIT_NORM_TOL = 1e-6


def _check_unit_norm(vectors: torch.Tensor, name: str) -> None:
    norms = torch.linalg.vector_norm(vectors.detach(), dim=-1)
    worst = (norms - 1.0).abs().max().item() if norms.numel() else 0.0
    if worst > UNIT_NORM_TOL:
        raise ValueError(f"{name} must be unit-norm, worst deviation {worst:.3e}")


@dataclass
class EmbeddingBatch:
    """(B, D) unit-norm embedding rows with a modality tag for bookkeeping."""

    vectors: torch.Tensor
    modality: str = ""

    def __post_init__(self) -> None:
        if self.vectors.ndim != 2 or self.vectors.shape[0] < 1:
            raise ValueError(f"embeddings must be a nonempty (B, D) tensor, got {tuple(self.vectors.shape)}")
        _check_unit_norm(self.vectors, f"{self.modality or 'embedding'} batch")

    @property
    def size(self) -> int:
        return self.vectors.shape[0]


def contrastive_loss(
    x: torch.Tensor,
    y: torch.Tensor,
    neg_x: torch.Tensor | None = None,
    neg_y: torch.Tensor | None = None,
    margin: float = 1.0,
) -> torch.Tensor:
    """Hinge over cosine similarities for one positive pair.

    sum_i relu(margin - x.y + neg_x_i.y) + sum_j relu(margin - x.y + x.neg_y_j);
    empty negative sets contribute nothing.
    """
    if margin <= 0:
        raise ValueError("margin must be positive")
    _check_unit_norm(x, "x")
    _check_unit_norm(y, "y")
    pos = (x * y).sum()
    total = x.new_zeros(())
    if neg_x is not None and neg_x.numel():
        _check_unit_norm(neg_x, "neg_x")
        total = total + F.relu(margin - pos + neg_x @ y).sum()
    if neg_y is not None and neg_y.numel():
        _check_unit_norm(neg_y, "neg_y")
        total = total + F.relu(margin - pos + x @ neg_y.T).sum()
    return total


def _paired_hinge_sum(a: torch.Tensor, b: torch.Tensor, margin: float) -> torch.Tensor:
    """Batch hinge with diagonal positives and off-diagonal in-batch negatives."""
    if margin <= 0:
        raise ValueError("margin must be positive")
    if a.shape != b.shape:
        raise ValueError(f"embedding batches must match, got {tuple(a.shape)} vs {tuple(b.shape)}")
    sims = a @ b.T  # sims[i, j] = l(a_i, b_j)
    pos = sims.diagonal()
    off = ~torch.eye(len(pos), dtype=torch.bool, device=sims.device)
    # negatives on the a side score against b_i (column i), on the b side
    # against a_i (row i); both hinges share the positive term of sample i
    col = F.relu(margin - pos.unsqueeze(0) + sims) * off
    row = F.relu(margin - pos.unsqueeze(1) + sims) * off
    return col.sum() + row.sum()


def inter_modal_loss(
    video_embs: EmbeddingBatch, sentence_embs: EmbeddingBatch, margin: float = 1.0
) -> torch.Tensor:
    """Video-sentence hinge, matched pairs on the diagonal. B=1 yields 0."""
    return _paired_hinge_sum(video_embs.vectors, sentence_embs.vectors, margin)


def intra_modal_loss(
    view1: EmbeddingBatch, view2: EmbeddingBatch, margin: float = 1.0
) -> torch.Tensor:
    """Hinge between two perturbation views of each video. B=1 yields 0."""
    return _paired_hinge_sum(view1.vectors, view2.vectors, margin)


def self_supervised_loss(inter: torch.Tensor, intra: torch.Tensor) -> torch.Tensor:
    """Plain sum of the two contrastive terms."""
    return inter + intra
