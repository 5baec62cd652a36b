"""Synthetic grounding data, the binary feature-file format, and batch assembly.

A sample is one video-sentence pair with an optional ground-truth segment.
The synthetic generator embeds per-concept signature vectors in gaussian
noise so a small model can learn grounding in minutes, while a non-learned
nearest-signature oracle stays available as a sanity bound.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .temporal import ScoredSegment, TemporalSegment, grid_index

__all__ = [
    "GroundingSample",
    "Dataset",
    "Batch",
    "generate_synthetic",
    "apply_label_fraction",
    "save_dataset",
    "load_features",
    "make_batches",
    "uniform_sample_indices",
    "nearest_signature_predictions",
    "DataFormatError",
    "VIDEO_MAGIC",
    "SENTENCE_MAGIC",
    "MANIFEST_NAME",
]

VIDEO_MAGIC = b"STLG"
SENTENCE_MAGIC = b"STLS"
MANIFEST_NAME = "manifest.tsv"


class DataFormatError(Exception):
    """A feature file or manifest does not follow the on-disk format."""


@dataclass(frozen=True)
class GroundingSample:
    """One video-sentence pair. Masks are valid-prefix bits (padding at the end)."""

    sample_id: str
    video: np.ndarray  # (T, D) float32
    video_mask: np.ndarray  # (T,) bool
    sentence: np.ndarray  # (N, D_w) float32
    sentence_mask: np.ndarray  # (N,) bool
    label: TemporalSegment | None

    def __post_init__(self) -> None:
        if self.video.ndim != 2 or self.sentence.ndim != 2:
            raise ValueError(f"sample {self.sample_id}: features must be 2-D matrices")
        if self.video.shape[0] < 1 or self.sentence.shape[0] < 1:
            raise ValueError(f"sample {self.sample_id}: empty feature sequence")
        if not (np.isfinite(self.video).all() and np.isfinite(self.sentence).all()):
            raise ValueError(f"sample {self.sample_id}: non-finite feature values")

    @property
    def is_labeled(self) -> bool:
        return self.label is not None


@dataclass(frozen=True)
class Dataset:
    samples: list[GroundingSample]
    split: str = "train"
    labeled_fraction: float = 1.0
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def labeled(self) -> list[GroundingSample]:
        return [s for s in self.samples if s.is_labeled]

    @property
    def unlabeled(self) -> list[GroundingSample]:
        return [s for s in self.samples if not s.is_labeled]


@dataclass(frozen=True)
class Batch:
    labeled: list[GroundingSample]
    unlabeled: list[GroundingSample]

    @property
    def size(self) -> int:
        return len(self.labeled) + len(self.unlabeled)

    @property
    def samples(self) -> list[GroundingSample]:
        return self.labeled + self.unlabeled


def _unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    rows = rng.normal(size=(n, dim))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def generate_synthetic(
    num_samples: int,
    num_steps: int = 64,
    video_dim: int = 32,
    word_dim: int = 16,
    num_concepts: int = 8,
    noise_sigma: float = 0.5,
    seed: int = 0,
    min_words: int = 4,
    max_words: int = 12,
    split: str = "train",
) -> Dataset:
    """Concept-signature dataset: unit vectors u_k hidden in noise.

    Every sample draws a concept k, a ground-truth segment with length uniform
    in [0.1, 0.6] of the clip (endpoints snapped to the frame grid), then
    video = sigma * N(0, 1) with u_k added on in-segment frames and
    sentence = w_k + sigma * N(0, 1) per word. Ground truth is recorded for
    all samples; use apply_label_fraction to hide a subset.
    """
    if num_samples < 1:
        raise ValueError(f"num_samples must be >= 1, got {num_samples}")
    if num_steps < 8:
        raise ValueError(f"num_steps must be >= 8, got {num_steps}")
    if num_concepts < 2:
        raise ValueError(f"num_concepts must be >= 2, got {num_concepts}")
    if video_dim < 1 or word_dim < 1:
        raise ValueError("feature dimensions must be positive")
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")
    if not 1 <= min_words <= max_words:
        raise ValueError(f"bad word-count range [{min_words}, {max_words}]")

    rng = np.random.default_rng(seed)
    video_sig = _unit_rows(rng, num_concepts, video_dim)
    sent_sig = _unit_rows(rng, num_concepts, word_dim)

    samples = []
    concepts = np.empty(num_samples, dtype=np.int64)
    for i in range(num_samples):
        k = int(rng.integers(num_concepts))
        concepts[i] = k
        length = rng.uniform(0.1, 0.6)
        start = rng.uniform(0.0, 1.0 - length)
        lo = grid_index(start, num_steps)
        hi = grid_index(start + length, num_steps)
        # snap the label to the frame grid so feature placement and label agree
        label = TemporalSegment(lo / (num_steps - 1), hi / (num_steps - 1))

        video = rng.normal(scale=1.0, size=(num_steps, video_dim)) * noise_sigma
        video[lo : hi + 1] += video_sig[k]

        n_words = int(rng.integers(min_words, max_words + 1))
        sentence = sent_sig[k] + rng.normal(size=(n_words, word_dim)) * noise_sigma

        samples.append(
            GroundingSample(
                sample_id=f"{split}_{i:05d}",
                video=video.astype(np.float32),
                video_mask=np.ones(num_steps, dtype=bool),
                sentence=sentence.astype(np.float32),
                sentence_mask=np.ones(n_words, dtype=bool),
                label=label,
            )
        )
    meta = {
        "video_signatures": video_sig.astype(np.float32),
        "sentence_signatures": sent_sig.astype(np.float32),
        "concepts": concepts,
    }
    return Dataset(samples=samples, split=split, labeled_fraction=1.0, meta=meta)


def apply_label_fraction(dataset: Dataset, fraction: float, seed: int) -> Dataset:
    """Keep labels on a uniform-random fraction of samples, hide the rest.

    Features are untouched; the labeled count is max(1, round(fraction * n)).
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"labeled fraction must be in (0, 1], got {fraction}")
    n = len(dataset.samples)
    if fraction == 1.0:
        return replace(dataset, labeled_fraction=1.0)
    keep_n = max(1, int(round(fraction * n)))
    rng = np.random.default_rng(seed)
    keep = set(rng.permutation(n)[:keep_n].tolist())
    samples = [
        s if i in keep else replace(s, label=None) for i, s in enumerate(dataset.samples)
    ]
    return replace(dataset, samples=samples, labeled_fraction=fraction)


# ---------------------------------------------------------------------------
# on-disk format


def _write_feature_file(path, magic: bytes, array: np.ndarray) -> None:
    arr = np.ascontiguousarray(array, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes(order="C"))


def _read_feature_file(path, magic: bytes) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != magic:
        raise DataFormatError(f"{path}: bad or missing magic bytes (expected {magic!r})")
    rows, cols = struct.unpack("<II", raw[4:12])
    if rows < 1 or cols < 1:
        raise DataFormatError(f"{path}: non-positive dimensions {rows}x{cols} in header")
    expected = 12 + rows * cols * 4
    if len(raw) != expected:
        raise DataFormatError(
            f"{path}: payload size {len(raw) - 12} bytes does not match header "
            f"{rows}x{cols} float32 ({expected - 12} bytes)"
        )
    return np.frombuffer(raw, dtype="<f4", offset=12).reshape(rows, cols).copy()


def save_dataset(dataset: Dataset, directory) -> None:
    """Write feature files plus the tab-separated annotation manifest."""
    import os

    os.makedirs(directory, exist_ok=True)
    lines = []
    for s in dataset.samples:
        video_name = f"{s.sample_id}_video.bin"
        sent_name = f"{s.sample_id}_sentence.bin"
        _write_feature_file(os.path.join(directory, video_name), VIDEO_MAGIC, s.video[s.video_mask])
        _write_feature_file(
            os.path.join(directory, sent_name), SENTENCE_MAGIC, s.sentence[s.sentence_mask]
        )
        if s.label is not None:
            start, end, flag = repr(float(s.label.start)), repr(float(s.label.end)), 1
        else:
            start, end, flag = "0.0", "0.0", 0
        lines.append(f"{s.sample_id}\t{video_name}\t{sent_name}\t{start}\t{end}\t{flag}\n")
    with open(os.path.join(directory, MANIFEST_NAME), "w", encoding="utf-8") as fh:
        fh.writelines(lines)


def uniform_sample_indices(length: int, target: int) -> np.ndarray:
    """Indices of `target` rows spread evenly over a length-`length` sequence."""
    if length < 1 or target < 1:
        raise ValueError("length and target must be positive")
    return np.round(np.linspace(0, length - 1, target)).astype(np.int64)


def _fit_length(array: np.ndarray, max_steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Subsample long sequences to max_steps, zero-pad short ones; returns (rows, mask)."""
    T = array.shape[0]
    if T > max_steps:
        out = array[uniform_sample_indices(T, max_steps)]
        mask = np.ones(max_steps, dtype=bool)
    elif T < max_steps:
        out = np.zeros((max_steps, array.shape[1]), dtype=array.dtype)
        out[:T] = array
        mask = np.zeros(max_steps, dtype=bool)
        mask[:T] = True
    else:
        out, mask = array, np.ones(T, dtype=bool)
    return out, mask


def load_features(directory, max_steps: int = 128, split: str = "train") -> Dataset:
    """Read a feature directory written in the documented binary format.

    Videos longer than max_steps are uniformly subsampled; shorter ones are
    zero-padded with a validity mask. Sentences keep their natural length.
    """
    import os

    manifest = os.path.join(directory, MANIFEST_NAME)
    if not os.path.exists(manifest):
        warnings.warn(f"no {MANIFEST_NAME} in {directory}; returning an empty dataset")
        return Dataset(samples=[], split=split, labeled_fraction=1.0)

    samples = []
    video_dim = None
    with open(manifest, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 6:
                raise DataFormatError(
                    f"{manifest}:{lineno}: expected 6 tab-separated fields, got {len(parts)}"
                )
            sid, video_name, sent_name, start_s, end_s, flag_s = parts
            video_path = os.path.join(directory, video_name)
            sent_path = os.path.join(directory, sent_name)
            for p in (video_path, sent_path):
                if not os.path.exists(p):
                    raise DataFormatError(f"{manifest}:{lineno}: missing feature file {p}")
            video = _read_feature_file(video_path, VIDEO_MAGIC)
            sentence = _read_feature_file(sent_path, SENTENCE_MAGIC)
            if video_dim is None:
                video_dim = video.shape[1]
            elif video.shape[1] != video_dim:
                raise DataFormatError(
                    f"{video_path}: feature dimension {video.shape[1]} differs from "
                    f"the dataset's {video_dim}"
                )
            if flag_s not in ("0", "1"):
                raise DataFormatError(f"{manifest}:{lineno}: labeled_flag must be 0 or 1")
            label = None
            if flag_s == "1":
                try:
                    label = TemporalSegment(float(start_s), float(end_s))
                except ValueError as exc:
                    raise DataFormatError(f"{manifest}:{lineno}: {exc}") from exc
            video, mask = _fit_length(video, max_steps)
            samples.append(
                GroundingSample(
                    sample_id=sid,
                    video=video,
                    video_mask=mask,
                    sentence=sentence,
                    sentence_mask=np.ones(sentence.shape[0], dtype=bool),
                    label=label,
                )
            )
    if not samples:
        warnings.warn(f"{manifest} lists no samples; returning an empty dataset")
        return Dataset(samples=[], split=split, labeled_fraction=1.0)
    frac = len([s for s in samples if s.is_labeled]) / len(samples)
    return Dataset(samples=samples, split=split, labeled_fraction=frac)


# ---------------------------------------------------------------------------
# batching


def labeled_per_batch(fraction: float, batch_size: int) -> int:
    return max(1, int(round(fraction * batch_size)))


def make_batches(dataset: Dataset, batch_size: int, seed) -> list[Batch]:
    """One epoch of batches honoring the labeled ratio exactly.

    Labeled and unlabeled pools are shuffled independently from the seed;
    every batch carries round(psi * B) labeled samples (at least one), and the
    labeled pool cycles with reshuffles when it runs out before the unlabeled
    pool. The final partial batch is dropped so composition never degrades.
    `seed` may be an int or a sequence (e.g. (run_seed, epoch)).
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    labeled = dataset.labeled
    unlabeled = dataset.unlabeled
    if not labeled:
        raise ValueError("dataset has no labeled samples; training is impossible")

    rng_lab = np.random.default_rng([_seed_entropy(seed), 0])
    rng_unlab = np.random.default_rng([_seed_entropy(seed), 1])

    n_lab = labeled_per_batch(dataset.labeled_fraction, batch_size) if unlabeled else batch_size
    n_lab = min(n_lab, batch_size)
    n_unlab = batch_size - n_lab

    if unlabeled and len(labeled) < n_lab:
        raise ValueError(
            f"need {n_lab} labeled samples per batch but the pool has {len(labeled)}"
        )

    lab_order = [labeled[i] for i in rng_lab.permutation(len(labeled))]
    lab_ptr = 0

    def take_labeled(count: int) -> list[GroundingSample]:
        nonlocal lab_order, lab_ptr
        out = []
        while len(out) < count:
            if lab_ptr == len(lab_order):
                lab_order = [labeled[i] for i in rng_lab.permutation(len(labeled))]
                lab_ptr = 0
            out.append(lab_order[lab_ptr])
            lab_ptr += 1
        return out

    batches: list[Batch] = []
    if n_unlab == 0 or not unlabeled:
        # fully-labeled epoch (psi = 1 or degenerate unlabeled pool)
        num = len(labeled) // batch_size
        if num == 0:
            return [Batch(labeled=take_labeled(len(labeled)), unlabeled=[])]
        for _ in range(num):
            batches.append(Batch(labeled=take_labeled(batch_size), unlabeled=[]))
        return batches

    unlab_order = [unlabeled[i] for i in rng_unlab.permutation(len(unlabeled))]
    num = len(unlab_order) // n_unlab
    if num == 0:
        # unlabeled pool smaller than one batch slot: degenerate to supervised
        num_sup = max(1, len(labeled) // batch_size)
        return [
            Batch(labeled=take_labeled(min(batch_size, len(labeled))), unlabeled=[])
            for _ in range(num_sup)
        ]
    for b in range(num):
        batches.append(
            Batch(
                labeled=take_labeled(n_lab),
                unlabeled=unlab_order[b * n_unlab : (b + 1) * n_unlab],
            )
        )
    return batches


def _seed_entropy(seed) -> int:
    """Fold an int or int-sequence seed into one non-negative integer."""
    if isinstance(seed, (int, np.integer)):
        return int(seed) & 0xFFFFFFFF
    acc = 0
    for part in seed:
        acc = (acc * 1000003 + int(part)) & 0xFFFFFFFFFFFF
    return acc


# ---------------------------------------------------------------------------
# analytic oracle


def nearest_signature_predictions(
    dataset: Dataset,
    smooth_window: int = 7,
    threshold: float = 0.5,
) -> list[list[ScoredSegment]]:
    """Non-learned localizer for synthetic data.

    Picks the concept whose sentence signature best matches the mean word
    vector, correlates video frames against that concept's video signature,
    smooths, thresholds at `threshold`, and returns the active run containing
    the best frame. Requires generator metadata (signatures) on the dataset.
    """
    try:
        video_sig = dataset.meta["video_signatures"]
        sent_sig = dataset.meta["sentence_signatures"]
    except KeyError as exc:
        raise ValueError("dataset has no signature metadata; oracle unavailable") from exc

    kernel = np.ones(smooth_window) / smooth_window
    out: list[list[ScoredSegment]] = []
    for s in dataset.samples:
        words = s.sentence[s.sentence_mask]
        query = words.mean(axis=0)
        query = query / max(np.linalg.norm(query), 1e-12)
        k = int(np.argmax(sent_sig @ query))
        scores = s.video[s.video_mask] @ video_sig[k]
        smoothed = np.convolve(scores, kernel, mode="same")
        active = smoothed > threshold
        best = int(np.argmax(smoothed))
        if not active[best]:
            lo = hi = best
        else:
            lo = best
            while lo > 0 and active[lo - 1]:
                lo -= 1
            hi = best
            while hi < len(active) - 1 and active[hi + 1]:
                hi += 1
        T = int(s.video_mask.sum())
        denom = max(T - 1, 1)
        score = float(np.clip(smoothed[lo : hi + 1].mean(), 0.0, 1.0))
        out.append([ScoredSegment(TemporalSegment(lo / denom, hi / denom), score)])
    return out
