"""Regression grounding head and its supervised losses.

The head pools the attended video feature with the attention weights and
regresses normalized [start, end] directly; training combines a smooth-L1
segment loss with an attention calibration term.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .encoders import AttendedVideo
from .temporal import TemporalSegment

__all__ = [
    "RegressionPrediction",
    "RegressionHead",
    "smooth_l1",
    "smooth_l1_regression_loss",
    "attention_calibration_loss",
    "regression_task_loss",
]

LOG_EPS = 1e-8


@dataclass
class RegressionPrediction:
    """Batched segment predictions: start/end (B,), attention (B, T)."""

    start: torch.Tensor
    end: torch.Tensor
    attention: torch.Tensor

    @property
    def segment(self) -> torch.Tensor:
        """(B, 2) stacked [start, end]."""
        return torch.stack([self.start, self.end], dim=-1)

    def segments(self) -> list[TemporalSegment]:
        starts = self.start.detach().clamp(0.0, 1.0).tolist()
        ends = self.end.detach().clamp(0.0, 1.0).tolist()
        return [TemporalSegment(s, max(s, e)) for s, e in zip(starts, ends)]


class RegressionHead(nn.Module):
    """Two-layer perceptron on the attention-pooled feature, squashed and ordered."""

    def __init__(self, hidden_dim: int):
        super().__init__()
        self.mlp = nn.Sequential(
            nn.Linear(hidden_dim, hidden_dim),
            nn.ReLU(),
            nn.Linear(hidden_dim, 2),
        )

    def forward(self, attended: AttendedVideo) -> RegressionPrediction:
        pooled = torch.einsum("bt,btd->bd", attended.attention, attended.features)
        raw = torch.sigmoid(self.mlp(pooled))
        start = torch.minimum(raw[:, 0], raw[:, 1])
        end = torch.maximum(raw[:, 0], raw[:, 1])
        return RegressionPrediction(start=start, end=end, attention=attended.attention)


def smooth_l1(x: torch.Tensor) -> torch.Tensor:
    """0.5 x^2 for |x| < 1, |x| - 0.5 otherwise (elementwise)."""
    ax = x.abs()
    return torch.where(ax < 1.0, 0.5 * x * x, ax - 0.5)


def smooth_l1_regression_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Smooth-L1 on both endpoints; segments are (..., 2) [start, end] tensors.

    Returns a per-sample tensor of shape (...,).
    """
    pred = torch.as_tensor(pred)
    target = torch.as_tensor(target)
    if pred.shape != target.shape or pred.shape[-1] != 2:
        raise ValueError(f"segment tensors must both be (..., 2), got {tuple(pred.shape)} vs {tuple(target.shape)}")
    return smooth_l1(pred - target).sum(dim=-1)


def attention_calibration_loss(
    target_mask: torch.Tensor, attention: torch.Tensor, eps: float = LOG_EPS
) -> torch.Tensor:
    """-(sum_t m_t log a_t) / (sum_t m_t), per sample.

    `target_mask` holds 0/1 bits over frames (at least one set bit per
    sample); attention is clamped at eps before the log.
    """
    target_mask = torch.as_tensor(target_mask)
    attention = torch.as_tensor(attention)
    if target_mask.shape != attention.shape:
        raise ValueError("target mask and attention shapes differ")
    support = target_mask.sum(dim=-1)
    if (support <= 0).any():
        raise ValueError("attention calibration target has an empty support")
    logs = torch.log(attention.clamp(min=eps))
    return -(target_mask * logs).sum(dim=-1) / support


def regression_task_loss(
    pred_segment: torch.Tensor,
    pred_attention: torch.Tensor,
    target_segment: torch.Tensor,
    target_mask: torch.Tensor,
    alpha_r: float = 0.01,
) -> torch.Tensor:
    """Segment loss plus alpha_r times attention calibration, per sample."""
    return smooth_l1_regression_loss(pred_segment, target_segment) + alpha_r * attention_calibration_loss(target_mask, pred_attention)
