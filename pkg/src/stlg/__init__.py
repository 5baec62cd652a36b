"""Semi-supervised temporal language grounding.

Teacher-student training of regression- and proposal-based grounding models
with pseudo labels, sequential perturbations, and inter/intra-modal
contrastive learning, plus a synthetic dataset generator, an evaluation
harness, and a CLI.
"""

__version__ = "0.1.0"

from .ablation import TOGGLE_GRID, AblationRow, run_ablation, summarize_ablation
from .config import ConfigError, TrainConfig, load_config
from .data import (
    Dataset,
    DataFormatError,
    GroundingSample,
    apply_label_fraction,
    generate_synthetic,
    load_features,
    save_dataset,
)
from .evaluation import MetricTable, evaluate_model, recall_at
from .models import ProposalModel, RegressionModel, build_model
from .temporal import ScoredSegment, TemporalSegment, iou, nms
from .trainer import (
    TrainingDiverged,
    TrainResult,
    load_checkpoint,
    pretrain,
    save_checkpoint,
    train,
)

__all__ = [
    "__version__",
    "AblationRow",
    "ConfigError",
    "DataFormatError",
    "Dataset",
    "GroundingSample",
    "MetricTable",
    "ProposalModel",
    "RegressionModel",
    "ScoredSegment",
    "TOGGLE_GRID",
    "TemporalSegment",
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "apply_label_fraction",
    "build_model",
    "evaluate_model",
    "generate_synthetic",
    "iou",
    "load_checkpoint",
    "load_config",
    "load_features",
    "nms",
    "pretrain",
    "recall_at",
    "run_ablation",
    "save_checkpoint",
    "save_dataset",
    "summarize_ablation",
    "train",
]
