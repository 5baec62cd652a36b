"""Config defaults, file round-trips, and validation failure modes."""

from __future__ import annotations

import pytest

from stlg.config import ConfigError, TrainConfig, load_config


def test_documented_defaults():
    c = TrainConfig()
    assert c.batch_size == 32
    assert c.lr == pytest.approx(0.001)
    assert c.alpha_r == pytest.approx(0.01)
    assert c.alpha_p == pytest.approx(1.0)
    assert c.beta == pytest.approx(1.0)
    assert c.margin == pytest.approx(1.0)
    assert c.theta_set == (0.25, 0.5, 0.75)
    assert c.num_steps == 128
    assert c.hidden_dim == 512
    assert c.anchor_widths == (1 / 16, 1 / 8, 1 / 4, 1 / 2)
    assert c.nms_threshold == pytest.approx(0.5)
    assert c.teacher_ema_decay == pytest.approx(1.0)
    assert c.use_pseudo and c.use_perturb and c.use_intra_cl and c.use_inter_cl


def test_file_round_trip(tmp_path):
    c = TrainConfig(model_type="proposal", psi=0.25, seed=7, theta_set=(0.5, 1.0))
    path = tmp_path / "run.cfg"
    c.to_file(path)
    again = TrainConfig.from_file(path)
    assert again == c


def test_file_parsing_types(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# comment line\n"
        "model_type = proposal\n"
        "psi = 0.5  # trailing comment\n"
        "batch_size = 16\n"
        "use_perturb = false\n"
        "theta_set = 0.5, 1.0\n",
        encoding="utf-8",
    )
    c = TrainConfig.from_file(path)
    assert c.model_type == "proposal"
    assert c.psi == 0.5
    assert c.batch_size == 16
    assert c.use_perturb is False
    assert c.theta_set == (0.5, 1.0)
    # untouched keys keep defaults
    assert c.lr == pytest.approx(0.001)


def test_unknown_key_is_hard_error(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("batch_sise = 16\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="batch_sise"):
        TrainConfig.from_file(path)


def test_duplicate_and_malformed_lines(tmp_path):
    path = tmp_path / "dup.cfg"
    path.write_text("seed = 1\nseed = 2\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="duplicate"):
        TrainConfig.from_file(path)
    path2 = tmp_path / "bad.cfg"
    path2.write_text("just some words\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="key = value"):
        TrainConfig.from_file(path2)


def test_missing_file():
    with pytest.raises(ConfigError, match="not found"):
        TrainConfig.from_file("/nonexistent/run.cfg")


def test_bad_value_types(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("batch_size = many\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="batch_size"):
        TrainConfig.from_file(path)
    path.write_text("use_pseudo = maybe\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="use_pseudo"):
        TrainConfig.from_file(path)


@pytest.mark.parametrize(
    "changes",
    [
        {"model_type": "detection"},
        {"psi": 0.0},
        {"psi": 1.5},
        {"batch_size": 0},
        {"lr": -0.1},
        {"margin": 0.0},
        {"teacher_ema_decay": 1.5},
        {"theta_set": ()},
        {"theta_set": (0.0, 0.5)},
        {"anchor_widths": (0.5, 0.25)},
        {"nms_threshold": 0.0},
        {"lag_fraction_min": 0.3, "lag_fraction_max": 0.2},
        {"num_steps": 1},
        {"hidden_dim": 7, "encoder_arch": "rnn"},
        {"pseudo_min_score": 1.0},
        {"class_weight_mode": "balanced"},
    ],
)
def test_invalid_values_rejected(changes):
    with pytest.raises(ConfigError):
        TrainConfig(**changes)


def test_odd_hidden_ok_for_conv():
    c = TrainConfig(hidden_dim=7, encoder_arch="conv")
    assert c.hidden_dim == 7


def test_load_config_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    TrainConfig().to_file(path)
    c = load_config(path, seed=99, model_type="proposal")
    assert c.seed == 99
    assert c.model_type == "proposal"
    # None overrides are skipped, not applied
    c2 = load_config(path, seed=None)
    assert c2.seed == TrainConfig().seed


def test_replace_revalidates():
    c = TrainConfig()
    with pytest.raises(ConfigError):
        c.replace(psi=-1.0)
