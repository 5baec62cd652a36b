"""The two grounding models: encoders, cross-modal interaction, task heads.

Both models share the encoder/projection layout and differ in the interaction
block and head: regression uses iterative co-attention and direct [start, end]
regression, proposal uses sentence-fusion self-attention over an anchor grid.
Projection pools give the unit-norm embeddings consumed by contrastive losses;
they pool the pre-interaction encoder outputs.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np
import torch
import torch.nn as nn

from .encoders import (
    CoAttention,
    EncodedSequence,
    FusionSelfAttention,
    ProjectionPool,
    SentenceEncoder,
    VideoEncoder,
)
from .proposal import AnchorSet, ProposalGrid, ProposalHead
from .regression import RegressionHead, RegressionPrediction

__all__ = [
    "RegressionOutput",
    "ProposalOutput",
    "GroundingModel",
    "RegressionModel",
    "ProposalModel",
    "build_model",
    "pad_stack",
    "collate",
]


def pad_stack(
    arrays: Sequence[np.ndarray], masks: Sequence[np.ndarray]
) -> tuple[torch.Tensor, torch.Tensor]:
    """Zero-pad (T_i, D) feature arrays to the batch max length and stack.

    Returns float32 features (B, T_max, D) and a bool mask (B, T_max); the
    incoming per-sample masks are carried into the padded layout.
    """
    if len(arrays) != len(masks) or not arrays:
        raise ValueError("pad_stack needs matching nonempty feature/mask lists")
    t_max = max(a.shape[0] for a in arrays)
    dim = arrays[0].shape[1]
    feats = torch.zeros(len(arrays), t_max, dim, dtype=torch.float32)
    mask = torch.zeros(len(arrays), t_max, dtype=torch.bool)
    for i, (a, m) in enumerate(zip(arrays, masks)):
        if a.shape[1] != dim:
            raise ValueError("pad_stack features must share their trailing dim")
        if a.shape[0] != m.shape[0]:
            raise ValueError("feature/mask length mismatch")
        t = a.shape[0]
        feats[i, :t] = torch.from_numpy(np.ascontiguousarray(a, dtype=np.float32))
        mask[i, :t] = torch.from_numpy(np.ascontiguousarray(m)).bool()
    return feats, mask


def collate(samples: Sequence) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
    """Batch grounding samples: (video, video_mask, sentence, sentence_mask)."""
    video, vmask = pad_stack([s.video for s in samples], [s.video_mask for s in samples])
    sent, smask = pad_stack([s.sentence for s in samples], [s.sentence_mask for s in samples])
    return video, vmask, sent, smask


class RegressionOutput(NamedTuple):
    prediction: RegressionPrediction
    video_embedding: torch.Tensor  # (B, D_h) unit-norm
    sentence_embedding: torch.Tensor  # (B, D_h) unit-norm


class ProposalOutput(NamedTuple):
    grid: ProposalGrid
    video_embedding: torch.Tensor
    sentence_embedding: torch.Tensor


class GroundingModel(nn.Module):
    """Shared encoder stack plus projection heads for contrastive pooling."""

    def __init__(
        self,
        video_dim: int,
        word_dim: int,
        hidden_dim: int = 512,
        encoder_arch: str = "rnn",
        sentence_arch: str = "rnn",
    ):
        super().__init__()
        self.hidden_dim = hidden_dim
        self.video_encoder = VideoEncoder(video_dim, hidden_dim, arch=encoder_arch)
        self.sentence_encoder = SentenceEncoder(word_dim, hidden_dim, arch=sentence_arch)
        self.video_pool = ProjectionPool(hidden_dim)
        self.sentence_pool = ProjectionPool(hidden_dim)

    def encode(
        self,
        video: torch.Tensor,
        video_mask: torch.Tensor,
        sentence: torch.Tensor,
        sentence_mask: torch.Tensor,
    ) -> tuple[EncodedSequence, EncodedSequence]:
        return (
            self.video_encoder(video, video_mask),
            self.sentence_encoder(sentence, sentence_mask),
        )

    def embed_video(self, video: torch.Tensor, video_mask: torch.Tensor) -> torch.Tensor:
        """Unit-norm pooled video embedding; used for both views of intra-modal pairs."""
        enc = self.video_encoder(video, video_mask)
        return self.video_pool(enc.features, enc.mask)

    def embed_sentence(self, sentence: torch.Tensor, sentence_mask: torch.Tensor) -> torch.Tensor:
        enc = self.sentence_encoder(sentence, sentence_mask)
        return self.sentence_pool(enc.features, enc.mask)


class RegressionModel(GroundingModel):
    """Co-attention interaction with direct segment regression."""

    def __init__(
        self,
        video_dim: int,
        word_dim: int,
        hidden_dim: int = 512,
        encoder_arch: str = "rnn",
        sentence_arch: str = "rnn",
        coattention_rounds: int = 2,
    ):
        super().__init__(video_dim, word_dim, hidden_dim, encoder_arch, sentence_arch)
        self.interaction = CoAttention(hidden_dim, rounds=coattention_rounds)
        self.head = RegressionHead(hidden_dim)

    def forward(
        self,
        video: torch.Tensor,
        video_mask: torch.Tensor,
        sentence: torch.Tensor,
        sentence_mask: torch.Tensor,
    ) -> RegressionOutput:
        venc, senc = self.encode(video, video_mask, sentence, sentence_mask)
        attended = self.interaction(venc, senc)
        prediction = self.head(attended)
        return RegressionOutput(
            prediction=prediction,
            video_embedding=self.video_pool(venc.features, venc.mask),
            sentence_embedding=self.sentence_pool(senc.features, senc.mask),
        )


class ProposalModel(GroundingModel):
    """Fusion self-attention over the anchor grid with boundary scoring."""

    def __init__(
        self,
        video_dim: int,
        word_dim: int,
        hidden_dim: int = 512,
        encoder_arch: str = "rnn",
        sentence_arch: str = "rnn",
        anchor_widths: tuple[float, ...] = AnchorSet().widths,
    ):
        super().__init__(video_dim, word_dim, hidden_dim, encoder_arch, sentence_arch)
        self.anchors = AnchorSet(widths=tuple(anchor_widths))
        self.interaction = FusionSelfAttention(hidden_dim)
        self.head = ProposalHead(hidden_dim, self.anchors.count)

    def forward(
        self,
        video: torch.Tensor,
        video_mask: torch.Tensor,
        sentence: torch.Tensor,
        sentence_mask: torch.Tensor,
    ) -> ProposalOutput:
        venc, senc = self.encode(video, video_mask, sentence, sentence_mask)
        fused = self.interaction(venc, senc)
        grid = self.head(fused, venc.mask)
        return ProposalOutput(
            grid=grid,
            video_embedding=self.video_pool(venc.features, venc.mask),
            sentence_embedding=self.sentence_pool(senc.features, senc.mask),
        )


def build_model(config) -> GroundingModel:
    """Instantiate the configured model type from a TrainConfig."""
    if config.model_type == "regression":
        return RegressionModel(
            video_dim=config.video_dim,
            word_dim=config.word_dim,
            hidden_dim=config.hidden_dim,
            encoder_arch=config.encoder_arch,
            sentence_arch=config.sentence_arch,
            coattention_rounds=config.coattention_rounds,
        )
    if config.model_type == "proposal":
        return ProposalModel(
            video_dim=config.video_dim,
            word_dim=config.word_dim,
            hidden_dim=config.hidden_dim,
            encoder_arch=config.encoder_arch,
            sentence_arch=config.sentence_arch,
            anchor_widths=config.anchor_widths,
        )
    raise ValueError(f"unknown model_type {config.model_type!r}")
