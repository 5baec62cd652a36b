"""Training configuration: typed fields, validation, flat key=value files.

Config files mirror TrainConfig field names one-to-one. Unknown keys are hard
errors; a silent hyperparameter typo is worse than a crash.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

__all__ = ["ConfigError", "TrainConfig", "load_config"]

MODEL_TYPES = ("regression", "proposal")
ENCODER_ARCHS = ("rnn", "conv")
SENTENCE_ARCHS = ("rnn", "conv", "mean")
CLASS_WEIGHT_MODES = ("per_scale", "global")


class ConfigError(ValueError):
    """Raised for malformed config files or invalid field values."""


@dataclass(frozen=True)
class TrainConfig:
    # model
    model_type: str = "regression"
    hidden_dim: int = 512
    encoder_arch: str = "rnn"
    sentence_arch: str = "rnn"
    coattention_rounds: int = 2
    anchor_widths: tuple[float, ...] = (1 / 16, 1 / 8, 1 / 4, 1 / 2)
    nms_threshold: float = 0.5

    # optimization
    psi: float = 0.1
    batch_size: int = 32
    lr: float = 0.001
    pretrain_epochs: int = 5
    semi_epochs: int = 10
    teacher_ema_decay: float = 1.0
    seed: int = 0

    # loss weights
    alpha_r: float = 0.01
    alpha_p: float = 1.0
    beta: float = 1.0
    margin: float = 1.0
    pseudo_weight: float = 1.0
    pseudo_min_score: float = 0.0
    class_weight_mode: str = "per_scale"

    # perturbations
    theta_set: tuple[float, ...] = (0.25, 0.5, 0.75)
    lag_fraction_min: float = 0.05
    lag_fraction_max: float = 0.2
    perturb_labeled: bool = False

    # ablation toggles
    use_pseudo: bool = True
    use_perturb: bool = True
    use_intra_cl: bool = True
    use_inter_cl: bool = True

    # data
    num_steps: int = 128
    max_steps: int = 128
    video_dim: int = 32
    word_dim: int = 16

    # synthetic generation
    train_samples: int = 2000
    val_samples: int = 200
    test_samples: int = 400
    num_concepts: int = 8
    noise_sigma: float = 0.5

    def __post_init__(self) -> None:
        def bad(msg: str) -> None:
            raise ConfigError(msg)

        if self.model_type not in MODEL_TYPES:
            bad(f"model_type must be one of {MODEL_TYPES}, got {self.model_type!r}")
        if self.encoder_arch not in ENCODER_ARCHS:
            bad(f"encoder_arch must be one of {ENCODER_ARCHS}, got {self.encoder_arch!r}")
        if self.sentence_arch not in SENTENCE_ARCHS:
            bad(f"sentence_arch must be one of {SENTENCE_ARCHS}, got {self.sentence_arch!r}")
        if self.class_weight_mode not in CLASS_WEIGHT_MODES:
            bad(f"class_weight_mode must be one of {CLASS_WEIGHT_MODES}, got {self.class_weight_mode!r}")
        if self.hidden_dim < 1:
            bad("hidden_dim must be >= 1")
        if self.encoder_arch == "rnn" and self.hidden_dim % 2:
            bad("hidden_dim must be even for the rnn encoder (bidirectional halves)")
        if self.coattention_rounds < 1:
            bad("coattention_rounds must be >= 1")
        if not self.anchor_widths or any(not 0 < w <= 1 for w in self.anchor_widths):
            bad("anchor_widths must be a nonempty tuple of values in (0, 1]")
        if any(b <= a for a, b in zip(self.anchor_widths, self.anchor_widths[1:])):
            bad("anchor_widths must be strictly increasing")
        if not 0 < self.nms_threshold <= 1:
            bad("nms_threshold must lie in (0, 1]")
        if not 0 < self.psi <= 1:
            bad("psi must lie in (0, 1]")
        if self.batch_size < 1:
            bad("batch_size must be >= 1")
        if self.lr <= 0:
            bad("lr must be positive")
        if self.pretrain_epochs < 0 or self.semi_epochs < 0:
            bad("epoch counts must be >= 0")
        if not 0 <= self.teacher_ema_decay <= 1:
            bad("teacher_ema_decay must lie in [0, 1]")
        for name in ("alpha_r", "alpha_p", "beta", "pseudo_weight"):
            if getattr(self, name) < 0:
                bad(f"{name} must be >= 0")
        if self.margin <= 0:
            bad("margin must be positive")
        if not 0 <= self.pseudo_min_score < 1:
            bad("pseudo_min_score must lie in [0, 1)")
        if not self.theta_set or any(not 0 < t <= 1 for t in self.theta_set):
            bad("theta_set must be a nonempty tuple of values in (0, 1]")
        if not 0 < self.lag_fraction_min <= self.lag_fraction_max <= 1:
            bad("lag fractions must satisfy 0 < min <= max <= 1")
        if self.num_steps < 2 or self.max_steps < 2:
            bad("num_steps and max_steps must be >= 2")
        if self.video_dim < 1 or self.word_dim < 1:
            bad("feature dims must be >= 1")
        if min(self.train_samples, self.val_samples, self.test_samples) < 1:
            bad("sample counts must be >= 1")
        if self.num_concepts < 1:
            bad("num_concepts must be >= 1")
        if self.noise_sigma < 0:
            bad("noise_sigma must be >= 0")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for key in ("anchor_widths", "theta_set"):
            out[key] = tuple(out[key])
        return out

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        coerced = {}
        for f in fields(cls):
            if f.name in values:
                coerced[f.name] = _coerce(f.name, values[f.name], f.type)
        return cls(**coerced)

    @classmethod
    def from_file(cls, path: str | Path) -> "TrainConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        values: dict[str, str] = {}
        for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key in values:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            values[key] = value
        return cls.from_dict(values)

    def to_file(self, path: str | Path) -> None:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                rendered = ", ".join(repr(v) for v in value)
            elif isinstance(value, bool):
                rendered = "true" if value else "false"
            elif isinstance(value, float):
                rendered = repr(value)
            else:
                rendered = str(value)
            lines.append(f"{f.name} = {rendered}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _coerce(name: str, value, annotation: str):
    """Parse a config value from its file string (passthrough for typed input)."""
    if not isinstance(value, str):
        if "tuple" in str(annotation) and isinstance(value, (list, tuple)):
            return tuple(float(v) for v in value)
        return value
    text = value.strip()
    ann = str(annotation)
    try:
        if ann == "bool":
            lowered = text.lower()
            if lowered in ("true", "1"):
                return True
            if lowered in ("false", "0"):
                return False
            raise ValueError(f"expected true/false, got {text!r}")
        if ann == "int":
            return int(text)
        if ann == "float":
            return float(text)
        if ann.startswith("tuple"):
            parts = [p for p in (s.strip() for s in text.split(",")) if p]
            if not parts:
                raise ValueError("expected a comma-separated list")
            return tuple(float(p) for p in parts)
        return text
    except ValueError as exc:
        raise ConfigError(f"config key {name!r}: {exc}") from exc


def load_config(path: str | Path, **overrides) -> TrainConfig:
    """Read a config file and apply keyword overrides (None values skipped)."""
    config = TrainConfig.from_file(path)
    applied = {k: v for k, v in overrides.items() if v is not None}
    if applied:
        config = config.replace(**applied)
    return config
