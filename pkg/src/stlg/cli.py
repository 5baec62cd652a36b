"""Command line front end: generate / train / evaluate / ablate.

Exit codes: 0 on success, 1 when a run fails mid-flight (diverged training),
2 for usage problems (bad arguments, unreadable files, invalid config).
Set STLG_NUM_WORKERS to pre-collate batches with a thread pool; results are
identical regardless of the worker count.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .ablation import TOGGLE_GRID, run_ablation, summarize_ablation
from .config import ConfigError, TrainConfig, load_config
from .data import (
    DataFormatError,
    MANIFEST_NAME,
    apply_label_fraction,
    generate_synthetic,
    load_features,
    save_dataset,
)
from .evaluation import evaluate_model
from .models import build_model
from .reporting import (
    plot_metric_table,
    render_ablation_report,
    render_training_report,
)
from .trainer import TrainingDiverged, load_checkpoint, save_checkpoint, train

__all__ = ["entrypoint", "build_parser"]

SPLITS = ("train", "val", "test")


class UsageError(Exception):
    pass


def _resolve_config(args) -> TrainConfig:
    overrides = {
        "seed": getattr(args, "seed", None),
        "model_type": getattr(args, "model", None),
    }
    if args.config is not None:
        return load_config(args.config, **overrides)
    config = TrainConfig()
    changes = {k: v for k, v in overrides.items() if v is not None}
    return config.replace(**changes) if changes else config


def _require_split(data_dir: Path, split: str) -> Path:
    split_dir = data_dir / split
    if not (split_dir / MANIFEST_NAME).is_file():
        raise UsageError(f"no {split} split under {data_dir} (missing {split_dir / MANIFEST_NAME})")
    return split_dir


def _optional_split(data_dir: Path, split: str, config: TrainConfig):
    split_dir = data_dir / split
    if not (split_dir / MANIFEST_NAME).is_file():
        return None
    return load_features(split_dir, max_steps=config.max_steps, split=split)


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    config = _resolve_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sizes = {"train": config.train_samples, "val": config.val_samples, "test": config.test_samples}
    for offset, split in enumerate(SPLITS):
        ds = generate_synthetic(
            sizes[split],
            num_steps=config.num_steps,
            video_dim=config.video_dim,
            word_dim=config.word_dim,
            num_concepts=config.num_concepts,
            noise_sigma=config.noise_sigma,
            seed=config.seed + offset,
            split=split,
        )
        if split == "train" and config.psi < 1.0:
            ds = apply_label_fraction(ds, config.psi, seed=config.seed + len(SPLITS))
        save_dataset(ds, out / split)
        labeled = len(ds.labeled)
        print(f"wrote {split}: {len(ds)} samples ({labeled} labeled) -> {out / split}")
    config.to_file(out / "config.txt")
    print(f"wrote config -> {out / 'config.txt'}")
    return 0


def cmd_train(args) -> int:
    config = _resolve_config(args)
    data_dir = Path(args.data)
    if not data_dir.is_dir():
        raise UsageError(f"data directory not found: {data_dir}")
    train_set = load_features(_require_split(data_dir, "train"), max_steps=config.max_steps)
    val_set = _optional_split(data_dir, "val", config)
    test_set = _optional_split(data_dir, "test", config)

    result = train(config, train_set, val_set)

    table = None
    if test_set is not None:
        best = build_model(config)
        best.load_state_dict(result.best_student_state)
        table = evaluate_model(
            best, test_set, nms_threshold=config.nms_threshold, batch_size=config.batch_size
        )

    out = Path(args.out)
    written = render_training_report(result.history, out, table=table)
    checkpoint = out / "model.pt"
    save_checkpoint(
        checkpoint,
        result.state,
        config,
        epoch=result.best_epoch,
        val_metric=result.best_metric,
        student_state=result.best_student_state,
        teacher_state=result.best_teacher_state,
    )
    written.append(checkpoint)

    last = result.history[-1] if result.history else None
    if last is not None:
        print(
            f"final epoch {last.epoch} ({last.phase}): loss_task={last.loss_task:.4f} "
            f"loss_self={last.loss_self:.4f} loss_all={last.loss_all:.4f}"
        )
    if val_set is not None:
        print(f"best epoch {result.best_epoch}: val R@1,IoU=0.5 = {result.best_metric:.2f}")
    if table is not None:
        print(table.as_text())
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_evaluate(args) -> int:
    state, config, epoch, metric = load_checkpoint(args.checkpoint)
    data_dir = Path(args.data)
    if not data_dir.is_dir():
        raise UsageError(f"data directory not found: {data_dir}")
    ds = load_features(
        _require_split(data_dir, args.split), max_steps=config.max_steps, split=args.split
    )
    table = evaluate_model(
        state.student, ds, nms_threshold=config.nms_threshold, batch_size=config.batch_size
    )
    print(f"checkpoint epoch {epoch} (stored val R@1,IoU=0.5 = {metric:.2f})")
    print(table.as_text())
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{args.split}_metrics.csv"
        table.to_csv(csv_path)
        png_path = plot_metric_table(table, out / f"{args.split}_metrics.png")
        print(f"wrote {csv_path}")
        print(f"wrote {png_path}")
    return 0


def cmd_ablate(args) -> int:
    config = _resolve_config(args)
    data_dir = Path(args.data)
    if not data_dir.is_dir():
        raise UsageError(f"data directory not found: {data_dir}")
    train_set = load_features(_require_split(data_dir, "train"), max_steps=config.max_steps)
    val_set = _optional_split(data_dir, "val", config)
    test_set = load_features(
        _require_split(data_dir, "test"), max_steps=config.max_steps, split="test"
    )
    try:
        seeds = tuple(int(s) for s in args.seeds.split(",") if s.strip())
    except ValueError:
        raise UsageError(f"bad --seeds value {args.seeds!r}, expected e.g. 0,1,2") from None
    if not seeds:
        raise UsageError("--seeds must name at least one seed")
    settings = None
    if args.settings is not None:
        settings = tuple(s.strip() for s in args.settings.split(",") if s.strip())

    def progress(name: str, seed: int, table) -> None:
        print(f"[{name} seed={seed}] test R@1,IoU=0.5 = {table.get(1, 0.5):.2f}")

    rows = run_ablation(
        config, train_set, val_set, test_set, seeds=seeds, settings=settings, callback=progress
    )
    summary = summarize_ablation(rows)
    written = render_ablation_report(rows, summary, Path(args.out))
    width = max(len(name) for name, _ in summary)
    print(f"{'setting'.ljust(width)}  median R@1,IoU=0.5")
    for name, value in summary:
        print(f"{name.ljust(width)}  {value:.2f}")
    for path in written:
        print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stlg",
        description="Semi-supervised temporal language grounding on synthetic data.",
        epilog="Set STLG_NUM_WORKERS to pre-collate batches with threads (results unchanged).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model_flag=True):
        p.add_argument("--config", type=Path, default=None, help="key=value config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        if model_flag:
            p.add_argument(
                "--model",
                choices=("regression", "proposal"),
                default=None,
                help="override the config model_type",
            )

    p = sub.add_parser("generate", help="write synthetic train/val/test splits")
    common(p, model_flag=False)
    p.add_argument("--out", type=Path, required=True, help="output dataset directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="two-phase training run with reports")
    common(p)
    p.add_argument("--data", type=Path, required=True, help="dataset directory from generate")
    p.add_argument("--out", type=Path, required=True, help="report directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="recall grid of a saved checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True, help="model.pt from train")
    p.add_argument("--data", type=Path, required=True, help="dataset directory")
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--out", type=Path, default=None, help="optional metrics output directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="toggle-grid retraining comparison")
    common(p)
    p.add_argument("--data", type=Path, required=True, help="dataset directory")
    p.add_argument("--out", type=Path, required=True, help="report directory")
    p.add_argument("--seeds", default="0,1,2", help="comma-separated training seeds")
    p.add_argument(
        "--settings",
        default=None,
        help="comma-separated grid rows to run (default: all). Known rows: "
        + ", ".join(name for name, _ in TOGGLE_GRID),
    )
    p.set_defaults(func=cmd_ablate)
    return parser


def entrypoint(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (UsageError, ConfigError, DataFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(entrypoint())
