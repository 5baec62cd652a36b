"""Sequence encoders, cross-modal interactions, and pooled contrastive embeddings.

All modules are batch-first: features (B, L, D) with boolean validity masks
(B, L). Masks are valid-prefix (padding only at the end), which the recurrent
encoders rely on for packing. Masked positions are zeroed on the way in and
on the way out so they cannot contribute to any pooled statistic.
"""

from __future__ import annotations

from typing import NamedTuple

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

__all__ = [
    "EncodedSequence",
    "AttendedVideo",
    "masked_mean",
    "masked_softmax",
    "VideoEncoder",
    "SentenceEncoder",
    "CoAttention",
    "FusionSelfAttention",
    "ProjectionPool",
]


class EncodedSequence(NamedTuple):
    features: torch.Tensor  # (B, L, D_h)
    mask: torch.Tensor  # (B, L) bool


class AttendedVideo(NamedTuple):
    features: torch.Tensor  # (B, T, D_h), the attended video feature h_r
    attention: torch.Tensor  # (B, T), simplex over valid positions


def masked_mean(feats: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean of valid rows; (B, L, D) + (B, L) -> (B, D). Requires >= 1 valid row."""
    counts = mask.sum(dim=-1, keepdim=True)
    if (counts == 0).any():
        raise ValueError("masked_mean over a fully masked sequence")
    total = (feats * mask.unsqueeze(-1)).sum(dim=-2)
    return total / counts


def masked_softmax(scores: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Softmax over the last axis restricted to valid positions (exact zeros elsewhere)."""
    if (~mask).all(dim=-1).any():
        raise ValueError("masked_softmax over a fully masked sequence")
    scores = scores.masked_fill(~mask, float("-inf"))
    return torch.softmax(scores, dim=-1)


class _SequenceEncoder(nn.Module):
    """Temporal conv front end + either a bi-directional LSTM or a second conv."""

    def __init__(self, input_dim: int, hidden_dim: int, arch: str):
        super().__init__()
        if arch not in ("rnn", "conv"):
            raise ValueError(f"unknown encoder arch {arch!r}")
        if arch == "rnn" and hidden_dim % 2 != 0:
            raise ValueError("hidden_dim must be even for the bidirectional encoder")
        self.input_dim = input_dim
        self.arch = arch
        self.conv = nn.Conv1d(input_dim, hidden_dim, kernel_size=3, padding=1)
        if arch == "rnn":
            self.rnn = nn.LSTM(
                hidden_dim, hidden_dim // 2, batch_first=True, bidirectional=True
            )
        else:
            self.conv2 = nn.Conv1d(hidden_dim, hidden_dim, kernel_size=3, padding=1)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> EncodedSequence:
        if x.ndim != 3 or x.shape[-1] != self.input_dim:
            raise ValueError(
                f"expected (B, L, {self.input_dim}) input, got {tuple(x.shape)}"
            )
        mask = mask.bool()
        x = x * mask.unsqueeze(-1)
        h = torch.relu(self.conv(x.transpose(1, 2))).transpose(1, 2)
        if self.arch == "rnn":
            lengths = mask.sum(dim=1).clamp(min=1).cpu()
            packed = pack_padded_sequence(h, lengths, batch_first=True, enforce_sorted=False)
            out, _ = self.rnn(packed)
            h, _ = pad_packed_sequence(out, batch_first=True, total_length=x.shape[1])
        else:
            h = torch.relu(self.conv2(h.transpose(1, 2))).transpose(1, 2)
        return EncodedSequence(h * mask.unsqueeze(-1), mask)


class VideoEncoder(_SequenceEncoder):
    def __init__(self, video_dim: int, hidden_dim: int = 512, arch: str = "rnn"):
        super().__init__(video_dim, hidden_dim, arch)


class SentenceEncoder(nn.Module):
    """Word-sequence encoder; arch "mean" is the order-insensitive ablation."""

    def __init__(self, word_dim: int, hidden_dim: int = 512, arch: str = "rnn"):
        super().__init__()
        self.word_dim = word_dim
        self.arch = arch
        if arch == "mean":
            self.proj = nn.Linear(word_dim, hidden_dim)
        else:
            self.inner = _SequenceEncoder(word_dim, hidden_dim, arch)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> EncodedSequence:
        if self.arch != "mean":
            return self.inner(x, mask)
        if x.ndim != 3 or x.shape[-1] != self.word_dim:
            raise ValueError(f"expected (B, N, {self.word_dim}) input, got {tuple(x.shape)}")
        mask = mask.bool()
        h = self.proj(x * mask.unsqueeze(-1))
        pooled = masked_mean(h, mask)
        h = pooled.unsqueeze(1).expand_as(h) * mask.unsqueeze(-1)
        return EncodedSequence(h, mask)


class CoAttention(nn.Module):
    """Iterative cross-modal co-attention.

    Alternates sentence-context-conditioned video attention with
    video-context-conditioned sentence attention for `rounds` rounds, then
    emits the attended video feature h_r = tanh(W [video; sentence_ctx]) and
    the final video attention.
    """

    def __init__(self, hidden_dim: int, rounds: int = 2):
        super().__init__()
        if rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {rounds}")
        self.rounds = rounds
        self.video_key = nn.Linear(hidden_dim, hidden_dim)
        self.video_query = nn.Linear(hidden_dim, hidden_dim)
        self.video_score = nn.Linear(hidden_dim, 1)
        self.sent_key = nn.Linear(hidden_dim, hidden_dim)
        self.sent_query = nn.Linear(hidden_dim, hidden_dim)
        self.sent_score = nn.Linear(hidden_dim, 1)
        self.out = nn.Linear(2 * hidden_dim, hidden_dim)

    def _video_attention(
        self, video: torch.Tensor, vmask: torch.Tensor, sent_ctx: torch.Tensor
    ) -> torch.Tensor:
        e = self.video_score(
            torch.tanh(self.video_key(video) + self.video_query(sent_ctx).unsqueeze(1))
        ).squeeze(-1)
        return masked_softmax(e, vmask)

    def forward(
        self, video: EncodedSequence, sentence: EncodedSequence
    ) -> AttendedVideo:
        hv, vmask = video
        hs, smask = sentence
        if not vmask.any(dim=-1).all() or not smask.any(dim=-1).all():
            raise ValueError("co-attention requires at least one valid position per sequence")
        sent_ctx = masked_mean(hs, smask)
        for _ in range(self.rounds):
            a = self._video_attention(hv, vmask, sent_ctx)
            video_ctx = torch.einsum("bt,btd->bd", a, hv)
            f = self.sent_score(
                torch.tanh(self.sent_key(hs) + self.sent_query(video_ctx).unsqueeze(1))
            ).squeeze(-1)
            w = masked_softmax(f, smask)
            sent_ctx = torch.einsum("bn,bnd->bd", w, hs)
        a = self._video_attention(hv, vmask, sent_ctx)
        fused = torch.cat([hv, sent_ctx.unsqueeze(1).expand_as(hv)], dim=-1)
        h_r = torch.tanh(self.out(fused)) * vmask.unsqueeze(-1)
        return AttendedVideo(h_r, a)


class FusionSelfAttention(nn.Module):
    """Pool the sentence, concatenate to each timestep, project, self-attend once."""

    def __init__(self, hidden_dim: int):
        super().__init__()
        self.fuse = nn.Linear(2 * hidden_dim, hidden_dim)
        self.query = nn.Linear(hidden_dim, hidden_dim)
        self.key = nn.Linear(hidden_dim, hidden_dim)
        self.value = nn.Linear(hidden_dim, hidden_dim)
        self.scale = hidden_dim**-0.5

    def forward(self, video: EncodedSequence, sentence: EncodedSequence) -> torch.Tensor:
        hv, vmask = video
        hs, smask = sentence
        if not vmask.any(dim=-1).all() or not smask.any(dim=-1).all():
            raise ValueError("fusion requires at least one valid position per sequence")
        sent_vec = masked_mean(hs, smask)
        fused = self.fuse(torch.cat([hv, sent_vec.unsqueeze(1).expand_as(hv)], dim=-1))
        scores = torch.einsum("btd,bsd->bts", self.query(fused), self.key(fused)) * self.scale
        attn = masked_softmax(scores, vmask.unsqueeze(1).expand_as(scores))
        h_p = fused + torch.einsum("bts,bsd->btd", attn, self.value(fused))
        return h_p * vmask.unsqueeze(-1)


class ProjectionPool(nn.Module):
    """Masked weighted mean -> linear projection head -> unit L2 norm."""

    def __init__(self, hidden_dim: int):
        super().__init__()
        self.proj = nn.Linear(hidden_dim, hidden_dim)

    def forward(
        self,
        feats: torch.Tensor,
        mask: torch.Tensor,
        weights: torch.Tensor | None = None,
    ) -> torch.Tensor:
        mask = mask.bool()
        if not mask.any(dim=-1).all():
            raise ValueError("cannot pool a fully masked sequence")
        if weights is None:
            pooled = masked_mean(feats, mask)
        else:
            weights = weights * mask
            norm = weights.sum(dim=-1, keepdim=True)
            if (norm <= 0).any():
                raise ValueError("pooling weights must have positive mass on valid positions")
            pooled = torch.einsum("bl,bld->bd", weights / norm, feats)
        z = self.proj(pooled)
        return F.normalize(z, p=2, dim=-1, eps=1e-12)
