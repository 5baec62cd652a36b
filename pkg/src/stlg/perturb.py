"""Sequential perturbations of video feature sequences.

Three kinds: time lagging (reverse a short span of rows), time scaling
(slow playback by repeating rows), and identity. All operate on the leading
axis, so the same call transforms a (T, D) feature matrix and its (T,)
validity mask consistently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "time_lagging",
    "time_scaling",
    "scaling_indices",
    "Perturbation",
    "random_perturbation",
    "random_augment_pair",
]

KINDS = ("lag", "scale", "identity")


def time_lagging(video: np.ndarray, r_s: int, r_e: int) -> np.ndarray:
    """Reverse rows r_s..r_e (1-indexed, inclusive); everything else unchanged."""
    T = video.shape[0]
    if not 1 <= r_s <= r_e <= T:
        raise ValueError(f"lag span [{r_s}, {r_e}] out of range for T={T}")
    out = video.copy()
    out[r_s - 1 : r_e] = out[r_s - 1 : r_e][::-1]
    return out


def scaling_indices(length: int, theta: float) -> np.ndarray:
    """Source row for each output row under playback rate theta.

    Output length T' = round(T / theta); output row t' reads input row
    floor(t' * theta).
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"playback rate must be in (0, 1], got {theta}")
    if length < 1:
        raise ValueError(f"sequence length must be >= 1, got {length}")
    out_len = int(np.floor(length / theta + 0.5))
    idx = np.floor(np.arange(out_len) * theta).astype(np.int64)
    return np.minimum(idx, length - 1)


def time_scaling(video: np.ndarray, theta: float) -> np.ndarray:
    """Slow the sequence down to length round(T / theta) by nearest-frame repeats."""
    return video[scaling_indices(video.shape[0], theta)]


@dataclass(frozen=True)
class Perturbation:
    """One drawn transform, replayable on features and masks alike."""

    kind: str  # "lag" | "scale" | "identity"
    lag_span: tuple[int, int] | None = None
    theta: float | None = None

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "lag":
            return time_lagging(x, *self.lag_span)
        if self.kind == "scale":
            return time_scaling(x, self.theta)
        if self.kind == "identity":
            return x.copy()
        raise ValueError(f"unknown perturbation kind {self.kind!r}")


def random_perturbation(
    length: int,
    rng: np.random.Generator,
    theta_set: tuple[float, ...] = (0.25, 0.5, 0.75),
    lag_fraction: tuple[float, float] = (0.05, 0.2),
) -> Perturbation:
    """Draw one transform uniformly over {lag, scale, identity}.

    Lag spans cover a uniform fraction of T in [lag_fraction[0], lag_fraction[1]]
    (at least one row) at a uniform position; scaling draws theta uniformly
    from theta_set.
    """
    if length < 1:
        raise ValueError(f"sequence length must be >= 1, got {length}")
    kind = KINDS[rng.integers(0, 3)]
    if kind == "lag":
        lo, hi = lag_fraction
        span = max(1, int(round(rng.uniform(lo, hi) * length)))
        span = min(span, length)
        start = int(rng.integers(1, length - span + 2))  # 1-indexed
        return Perturbation("lag", lag_span=(start, start + span - 1))
    if kind == "scale":
        theta = float(theta_set[rng.integers(0, len(theta_set))])
        return Perturbation("scale", theta=theta)
    return Perturbation("identity")


def random_augment_pair(
    video: np.ndarray,
    rng: np.random.Generator,
    theta_set: tuple[float, ...] = (0.25, 0.5, 0.75),
    lag_fraction: tuple[float, float] = (0.05, 0.2),
) -> tuple[np.ndarray, np.ndarray]:
    """Two independently perturbed views of the same sequence."""
    first = random_perturbation(video.shape[0], rng, theta_set, lag_fraction)
    second = random_perturbation(video.shape[0], rng, theta_set, lag_fraction)
    return first.apply(video), second.apply(video)
