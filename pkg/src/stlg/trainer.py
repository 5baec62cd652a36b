"""Two-phase teacher-student training.

Phase one pretrains on the labeled pool with the task loss alone. Phase two
runs semi-supervised epochs: the teacher labels the unlabeled part of every
batch on unperturbed inputs, the student trains on ground truth plus pseudo
targets (optionally on perturbed views) with contrastive terms added, and the
teacher is refreshed from the student at each epoch end.
"""

from __future__ import annotations

import copy
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .config import TrainConfig
from .contrastive import EmbeddingBatch, inter_modal_loss, intra_modal_loss
from .data import Batch, Dataset, GroundingSample, make_batches, uniform_sample_indices
from .evaluation import IOU_THRESHOLDS, RECALL_NS, evaluate_model
from .models import GroundingModel, ProposalModel, RegressionModel, build_model, collate, pad_stack
from .perturb import Perturbation, random_perturbation
from .proposal import ClassWeights, compute_class_weights, joint_score_and_select, proposal_task_loss
from .pseudo import proposal_bits
from .regression import regression_task_loss
from .temporal import TemporalSegment, segment_frame_mask

__all__ = [
    "TrainingDiverged",
    "TeacherStudent",
    "EpochRecord",
    "TrainResult",
    "init_teacher_student",
    "pretrain",
    "semi_supervised_epoch",
    "train",
    "write_history_csv",
    "save_checkpoint",
    "load_checkpoint",
    "SELECTION_METRIC",
]

CHECKPOINT_VERSION = 1
SELECTION_METRIC = (1, 0.5)  # best checkpoint by validation R@1, IoU=0.5


class TrainingDiverged(RuntimeError):
    """Raised when a non-finite loss appears; training cannot continue."""


@dataclass
class TeacherStudent:
    """Student is optimized; teacher only ever receives parameter syncs."""

    student: GroundingModel
    teacher: GroundingModel

    def sync_teacher(self, decay: float = 1.0) -> None:
        """teacher <- decay * student + (1 - decay) * teacher, parameter-wise."""
        with torch.no_grad():
            s_params = dict(self.student.named_parameters())
            for name, t_param in self.teacher.named_parameters():
                t_param.mul_(1.0 - decay).add_(s_params[name], alpha=decay)
            s_buffers = dict(self.student.named_buffers())
            for name, t_buf in self.teacher.named_buffers():
                t_buf.copy_(s_buffers[name])


@dataclass
class EpochRecord:
    epoch: int
    phase: str  # "pretrain" | "semi"
    loss_task: float
    loss_self: float
    loss_all: float
    metrics: dict = field(default_factory=dict)  # {(n, m): recall}


@dataclass
class TrainResult:
    state: TeacherStudent
    history: list[EpochRecord]
    best_epoch: int
    best_metric: float
    best_student_state: dict
    best_teacher_state: dict


def init_teacher_student(config: TrainConfig) -> TeacherStudent:
    """Build the student and an identically initialized, frozen teacher."""
    torch.manual_seed(config.seed)
    student = build_model(config)
    teacher = build_model(config)
    teacher.load_state_dict(student.state_dict())
    teacher.requires_grad_(False)
    teacher.eval()
    return TeacherStudent(student=student, teacher=teacher)


# ---------------------------------------------------------------------------
# target construction


def _valid_video(sample: GroundingSample) -> np.ndarray:
    n = int(sample.video_mask.sum())
    return sample.video[:n]


def _regression_targets(
    segments: Sequence[TemporalSegment], lengths: Sequence[int], t_max: int
) -> tuple[torch.Tensor, torch.Tensor]:
    seg = torch.tensor([[s.start, s.end] for s in segments], dtype=torch.float32)
    mask = torch.zeros(len(segments), t_max, dtype=torch.float32)
    for i, (s, n) in enumerate(zip(segments, lengths)):
        mask[i, :n] = torch.from_numpy(segment_frame_mask(s, n))
    return seg, mask


def _proposal_targets(
    segments: Sequence[TemporalSegment],
    lengths: Sequence[int],
    t_max: int,
    anchors,
    inclusive: bool,
) -> tuple[torch.Tensor, torch.Tensor]:
    from .proposal import anchor_targets, boundary_targets

    a_tgt = torch.zeros(len(segments), t_max, anchors.count, dtype=torch.float32)
    b_tgt = torch.zeros(len(segments), t_max, dtype=torch.float32)
    for i, (s, n) in enumerate(zip(segments, lengths)):
        if inclusive:
            a_bits, b_bits = proposal_bits(s, anchors, n)
        else:
            a_bits = anchor_targets(s, anchors, n)
            b_bits = boundary_targets(s, n)
        a_tgt[i, :n] = torch.from_numpy(a_bits)
        b_tgt[i, :n] = torch.from_numpy(b_bits)
    return a_tgt, b_tgt


def _float_weights(w: ClassWeights) -> ClassWeights:
    return ClassWeights(pos=w.pos.to(torch.float32), neg=w.neg.to(torch.float32))


def _task_loss(
    model: GroundingModel,
    output,
    segments: Sequence[TemporalSegment],
    lengths: Sequence[int],
    t_max: int,
    config: TrainConfig,
    inclusive: bool,
) -> torch.Tensor:
    """Per-sample task losses for one branch (ground truth or pseudo targets)."""
    if isinstance(model, RegressionModel):
        seg_tgt, mask_tgt = _regression_targets(segments, lengths, t_max)
        pred = output.prediction
        return regression_task_loss(
            pred.segment, pred.attention, seg_tgt, mask_tgt, alpha_r=config.alpha_r
        )
    a_tgt, b_tgt = _proposal_targets(
        segments, lengths, t_max, model.anchors, inclusive=inclusive
    )
    per_scale = config.class_weight_mode == "per_scale"
    wa = _float_weights(compute_class_weights(a_tgt, per_scale=per_scale))
    wb = _float_weights(compute_class_weights(b_tgt, per_scale=False))
    grid = output.grid
    return proposal_task_loss(
        a_tgt, grid.anchor_scores, b_tgt, grid.boundary_scores, wa, wb, alpha_p=config.alpha_p
    )


# ---------------------------------------------------------------------------
# perturbed views


def _capped(view: np.ndarray, max_steps: int) -> np.ndarray:
    if view.shape[0] > max_steps:
        view = view[uniform_sample_indices(view.shape[0], max_steps)]
    return view


def _perturbed_views(
    videos: Sequence[np.ndarray], rng: np.random.Generator, config: TrainConfig
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Perturbed copies of fully-valid videos plus their all-ones masks."""
    views, masks = [], []
    lag = (config.lag_fraction_min, config.lag_fraction_max)
    for vid in videos:
        pert = random_perturbation(vid.shape[0], rng, config.theta_set, lag)
        view = _capped(pert.apply(vid), config.max_steps)
        views.append(view)
        masks.append(np.ones(view.shape[0], dtype=bool))
    return views, masks


def _augment_pairs(
    videos: Sequence[np.ndarray], rng: np.random.Generator, config: TrainConfig
) -> tuple[tuple[list, list], tuple[list, list]]:
    v1, m1 = _perturbed_views(videos, rng, config)
    v2, m2 = _perturbed_views(videos, rng, config)
    return (v1, m1), (v2, m2)


# ---------------------------------------------------------------------------
# teacher predictions


def _teacher_segments(
    state: TeacherStudent, samples: Sequence[GroundingSample], config: TrainConfig
) -> tuple[list[TemporalSegment], list[bool]]:
    """Pseudo segments from the teacher on unperturbed inputs, plus keep flags."""
    video, vmask, sent, smask = collate(samples)
    with torch.no_grad():
        out = state.teacher(video, vmask, sent, smask)
    if isinstance(state.teacher, RegressionModel):
        return out.prediction.segments(), [True] * len(samples)
    segments, keep = [], []
    for i in range(len(samples)):
        top = joint_score_and_select(
            out.grid,
            state.teacher.anchors,
            nms_threshold=config.nms_threshold,
            top_n=1,
            sample_index=i,
        )[0]
        segments.append(top.segment)
        keep.append(top.score >= config.pseudo_min_score)
    return segments, keep


# ---------------------------------------------------------------------------
# one batch


def _batch_losses(
    state: TeacherStudent,
    config: TrainConfig,
    batch: Batch,
    phase: str,
    perturb_rng: np.random.Generator,
    view_rng: np.random.Generator,
) -> tuple[torch.Tensor, torch.Tensor]:
    model = state.student
    semi = phase == "semi"
    video_embs: list[torch.Tensor] = []
    sent_embs: list[torch.Tensor] = []

    # labeled branch, ground-truth targets
    lab = batch.labeled
    lab_videos = [_valid_video(s) for s in lab]
    lab_masks = [np.ones(v.shape[0], dtype=bool) for v in lab_videos]
    if semi and config.perturb_labeled and config.use_perturb:
        lab_videos, lab_masks = _perturbed_views(lab_videos, perturb_rng, config)
    video, vmask = pad_stack(lab_videos, lab_masks)
    sent, smask = pad_stack([s.sentence for s in lab], [s.sentence_mask for s in lab])
    out = model(video, vmask, sent, smask)
    lengths = [v.shape[0] for v in lab_videos]
    labeled_loss = _task_loss(
        model, out, [s.label for s in lab], lengths, video.shape[1], config, inclusive=False
    ).mean()
    task = labeled_loss
    video_embs.append(out.video_embedding)
    sent_embs.append(out.sentence_embedding)

    unlab = batch.unlabeled if semi else []
    need_embeddings = semi and (config.use_inter_cl or config.use_intra_cl)
    if unlab and config.use_pseudo:
        pseudo_segments, keep = _teacher_segments(state, unlab, config)
        u_videos = [_valid_video(s) for s in unlab]
        if config.use_perturb:
            u_videos, u_masks = _perturbed_views(u_videos, perturb_rng, config)
        else:
            u_masks = [np.ones(v.shape[0], dtype=bool) for v in u_videos]
        u_video, u_vmask = pad_stack(u_videos, u_masks)
        u_sent, u_smask = pad_stack(
            [s.sentence for s in unlab], [s.sentence_mask for s in unlab]
        )
        u_out = model(u_video, u_vmask, u_sent, u_smask)
        per_sample = _task_loss(
            model,
            u_out,
            pseudo_segments,
            [v.shape[0] for v in u_videos],
            u_video.shape[1],
            config,
            inclusive=True,
        )
        keep_t = torch.tensor(keep, dtype=per_sample.dtype)
        kept = keep_t.sum()
        if kept > 0:
            task = task + config.pseudo_weight * (per_sample * keep_t).sum() / kept
        video_embs.append(u_out.video_embedding)
        sent_embs.append(u_out.sentence_embedding)
    elif unlab and need_embeddings:
        # no pseudo branch: embed the raw unlabeled inputs for contrastive terms
        u_video, u_vmask = pad_stack(
            [_valid_video(s) for s in unlab],
            [np.ones(int(s.video_mask.sum()), dtype=bool) for s in unlab],
        )
        u_sent, u_smask = pad_stack(
            [s.sentence for s in unlab], [s.sentence_mask for s in unlab]
        )
        video_embs.append(model.embed_video(u_video, u_vmask))
        sent_embs.append(model.embed_sentence(u_sent, u_smask))

    # the contrastive sums grow with the number of in-batch pairs, so each
    # term is normalized by its anchor count to sit on the task loss scale
    self_loss = task.new_zeros(())
    if semi and config.use_inter_cl:
        v_all = torch.cat(video_embs, dim=0)
        s_all = torch.cat(sent_embs, dim=0)
        inter = inter_modal_loss(
            EmbeddingBatch(v_all, "video"), EmbeddingBatch(s_all, "sentence"), config.margin
        )
        self_loss = self_loss + inter / v_all.shape[0]
    if semi and config.use_intra_cl:
        originals = [_valid_video(s) for s in batch.samples]
        (v1, m1), (v2, m2) = _augment_pairs(originals, view_rng, config)
        feats1, mask1 = pad_stack(v1, m1)
        feats2, mask2 = pad_stack(v2, m2)
        emb1 = model.embed_video(feats1, mask1)
        emb2 = model.embed_video(feats2, mask2)
        intra = intra_modal_loss(
            EmbeddingBatch(emb1, "view1"), EmbeddingBatch(emb2, "view2"), config.margin
        )
        self_loss = self_loss + intra / len(originals)
    return task, self_loss


# ---------------------------------------------------------------------------
# epochs


def _prepare_batches(batches: list[Batch]) -> list[Batch]:
    """Optional threaded pre-collation; results are discarded so worker count
    can never affect batch order or RNG consumption (collate is pure)."""
    workers = int(os.environ.get("STLG_NUM_WORKERS", "0") or 0)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda b: collate(b.samples), batches))
    return batches


def _run_epoch(
    state: TeacherStudent,
    config: TrainConfig,
    batches: list[Batch],
    optimizer: torch.optim.Optimizer,
    phase: str,
    epoch: int,
) -> tuple[float, float]:
    state.student.train()
    perturb_rng = np.random.default_rng([config.seed, epoch, 2])
    view_rng = np.random.default_rng([config.seed, epoch, 3])
    task_sum = 0.0
    self_sum = 0.0
    for b_idx, batch in enumerate(_prepare_batches(batches)):
        optimizer.zero_grad()
        task, self_loss = _batch_losses(state, config, batch, phase, perturb_rng, view_rng)
        total = task + config.beta * self_loss
        if not torch.isfinite(total):
            raise TrainingDiverged(
                f"non-finite loss in {phase} epoch {epoch}, batch {b_idx}: "
                f"task={float(task.detach())!r}, self={float(self_loss.detach())!r}"
            )
        total.backward()
        optimizer.step()
        task_sum += float(task.detach())
        self_sum += float(self_loss.detach())
    n = max(1, len(batches))
    return task_sum / n, self_sum / n


def semi_supervised_epoch(
    state: TeacherStudent,
    config: TrainConfig,
    batches: list[Batch],
    optimizer: torch.optim.Optimizer,
    epoch: int = 0,
) -> EpochRecord:
    """One semi-supervised epoch; syncs the teacher at the end."""
    loss_task, loss_self = _run_epoch(state, config, batches, optimizer, "semi", epoch)
    state.sync_teacher(config.teacher_ema_decay)
    return EpochRecord(
        epoch=epoch,
        phase="semi",
        loss_task=loss_task,
        loss_self=loss_self,
        loss_all=loss_task + config.beta * loss_self,
    )


def _labeled_view(dataset: Dataset) -> Dataset:
    return replace(dataset, samples=dataset.labeled, labeled_fraction=1.0)


def _evaluate(state: TeacherStudent, val_set, config: TrainConfig) -> dict:
    if val_set is None:
        return {}
    table = evaluate_model(
        state.student, val_set, nms_threshold=config.nms_threshold, batch_size=config.batch_size
    )
    return dict(table.values)


def _train_impl(
    config: TrainConfig, train_set: Dataset, val_set, semi_epochs: int
) -> TrainResult:
    if not train_set.labeled:
        raise ValueError("training requires a non-empty labeled pool")
    state = init_teacher_student(config)
    optimizer = torch.optim.Adam(state.student.parameters(), lr=config.lr)
    labeled_only = _labeled_view(train_set)
    history: list[EpochRecord] = []
    best_metric = -math.inf
    best_epoch = -1
    best_student = copy.deepcopy(state.student.state_dict())
    best_teacher = copy.deepcopy(state.teacher.state_dict())

    def track(record: EpochRecord) -> None:
        nonlocal best_metric, best_epoch, best_student, best_teacher
        history.append(record)
        score = record.metrics.get(SELECTION_METRIC)
        if score is not None and score > best_metric:
            best_metric = score
            best_epoch = record.epoch
            best_student = copy.deepcopy(state.student.state_dict())
            best_teacher = copy.deepcopy(state.teacher.state_dict())

    for epoch in range(config.pretrain_epochs):
        batches = make_batches(labeled_only, config.batch_size, seed=(config.seed, epoch))
        loss_task, loss_self = _run_epoch(state, config, batches, optimizer, "pretrain", epoch)
        record = EpochRecord(
            epoch=epoch,
            phase="pretrain",
            loss_task=loss_task,
            loss_self=loss_self,
            loss_all=loss_task + config.beta * loss_self,
            metrics=_evaluate(state, val_set, config),
        )
        track(record)
    # phase boundary: the teacher becomes the pretrained model
    state.sync_teacher(1.0)

    for k in range(semi_epochs):
        epoch = config.pretrain_epochs + k
        batches = make_batches(train_set, config.batch_size, seed=(config.seed, epoch))
        record = semi_supervised_epoch(state, config, batches, optimizer, epoch=epoch)
        record.metrics = _evaluate(state, val_set, config)
        track(record)

    if best_epoch < 0:
        # no validation set: keep the final state
        best_student = copy.deepcopy(state.student.state_dict())
        best_teacher = copy.deepcopy(state.teacher.state_dict())
        best_epoch = len(history) - 1
        best_metric = float("nan")
    return TrainResult(
        state=state,
        history=history,
        best_epoch=best_epoch,
        best_metric=best_metric,
        best_student_state=best_student,
        best_teacher_state=best_teacher,
    )


def pretrain(config: TrainConfig, dataset: Dataset, val_set=None) -> TrainResult:
    """Supervised phase only: task loss on the labeled pool."""
    return _train_impl(config, dataset, val_set, semi_epochs=0)


def train(config: TrainConfig, train_set: Dataset, val_set=None) -> TrainResult:
    """Full two-phase run: pretrain, then semi-supervised epochs."""
    return _train_impl(config, train_set, val_set, semi_epochs=config.semi_epochs)


# ---------------------------------------------------------------------------
# records and checkpoints


def _metric_columns() -> list[str]:
    return [f"r{n}_iou{m:.1f}" for n in RECALL_NS for m in IOU_THRESHOLDS]


def write_history_csv(history: Sequence[EpochRecord], path: str | Path) -> None:
    """Per-epoch loss decomposition and validation metrics, fixed format."""
    columns = ["epoch", "phase", "loss_task", "loss_self", "loss_all"] + _metric_columns()
    lines = [",".join(columns)]
    for rec in history:
        cells = [
            str(rec.epoch),
            rec.phase,
            f"{rec.loss_task:.12g}",
            f"{rec.loss_self:.12g}",
            f"{rec.loss_all:.12g}",
        ]
        for n in RECALL_NS:
            for m in IOU_THRESHOLDS:
                value = rec.metrics.get((n, m))
                cells.append("" if value is None else f"{value:.6f}")
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_checkpoint(
    path: str | Path,
    state: TeacherStudent,
    config: TrainConfig,
    epoch: int,
    val_metric: float,
    student_state: dict | None = None,
    teacher_state: dict | None = None,
) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "model_state": student_state if student_state is not None else state.student.state_dict(),
        "teacher_state": teacher_state if teacher_state is not None else state.teacher.state_dict(),
        "config": config.as_dict(),
        "epoch": epoch,
        "val_metric": val_metric,
    }
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> tuple[TeacherStudent, TrainConfig, int, float]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=True)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {version!r}")
    config = TrainConfig.from_dict(payload["config"])
    state = init_teacher_student(config)
    state.student.load_state_dict(payload["model_state"])
    state.teacher.load_state_dict(payload["teacher_state"])
    state.teacher.eval()
    return state, config, int(payload["epoch"]), float(payload["val_metric"])
