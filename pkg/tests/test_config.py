"""Config loading, overrides, validation, snapshots."""

import json

import pytest

from vinpaint.config import (
    ConfigError,
    default_config,
    load_config,
    loss_weights_from,
    model_config_from,
    optim_config_from,
    parse_override,
    smooth_spec_from,
    snapshot_config,
    stroke_spec_from,
)


def test_defaults_are_self_consistent():
    cfg = load_config()
    assert cfg == default_config()
    assert model_config_from(cfg).channels == 32
    assert optim_config_from(cfg).learning_rate == 1e-4
    w = loss_weights_from(cfg)
    assert (w.lambda_f, w.lambda_s, w.lambda_c, w.lambda_y) == (2.5, 0.25, 1.0, 1.0)


def test_file_merge_and_override(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"model": {"channels": 16}, "seed": 7}))
    cfg = load_config(path, overrides=["train.total_steps=5", "model.window=2"])
    assert cfg["model"]["channels"] == 16
    assert cfg["seed"] == 7
    assert cfg["train"]["total_steps"] == 5
    assert cfg["model"]["window"] == 2
    # untouched keys keep defaults
    assert cfg["train"]["learning_rate"] == 1e-4


def test_unknown_file_keys_all_reported(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"modle": {"channels": 16}, "train": {"lr": 1}}))
    with pytest.raises(ConfigError) as err:
        load_config(path)
    assert "modle" in str(err.value) and "train.lr" in str(err.value)


def test_unknown_override_key_rejected():
    with pytest.raises(ConfigError) as err:
        load_config(overrides=["model.depth=3"])
    assert "model.depth" in str(err.value)
    with pytest.raises(ConfigError):
        load_config(overrides=["no_equals_sign"])


def test_override_parsing_types():
    assert parse_override("a=3") == ("a", 3)
    assert parse_override("a=0.5") == ("a", 0.5)
    assert parse_override("a=null") == ("a", None)
    assert parse_override("a=[1,2]") == ("a", [1, 2])
    assert parse_override("a=hello") == ("a", "hello")


def test_missing_config_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/config.json")


def test_snapshot_roundtrip(tmp_path):
    cfg = load_config(overrides=["seed=3"])
    path = snapshot_config(cfg, tmp_path)
    assert json.loads(path.read_text()) == cfg
    # snapshot is itself a loadable config
    again = load_config(path)
    assert again == cfg


def test_spec_extraction(tmp_path):
    cfg = load_config(overrides=["data.stroke.brush_width=[4.0,8.0]", "seed=9"])
    stroke = stroke_spec_from(cfg)
    assert stroke.brush_width == (4.0, 8.0)
    assert stroke.seed == 9
    smooth = smooth_spec_from(cfg)
    assert smooth.iterations == 4
