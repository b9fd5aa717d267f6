"""Config files: JSON with a fixed key schema, dot-key overrides, snapshots.

Unknown keys are rejected (every offender listed at once). A resolved
snapshot is written next to each run's outputs so any result can be
reproduced from (inputs, seeds, snapshot).
"""

import copy
import json
import math
from pathlib import Path

from .losses import LossWeights
from .masks import SmoothSpec, StrokeSpec
from .models import ModelConfig
from .synth import MotionSpec
from .train import OptimConfig

DEFAULTS = {
    "seed": 0,
    "data": {
        "height": 64,
        "width": 64,
        "frames_per_clip": 8,
        "clips": {"train": 4, "val": 0, "test": 0},
        "source_dir": None,
        "noise_dir": None,
        "pan_speed": 3.0,
        "stroke": {
            "num_strokes": [1, 3],
            "vertices": [3, 6],
            "brush_width": [5.0, 11.0],
            "max_turn_deg": 60.0,
            "segment_length": [0.06, 0.25],
        },
        "smooth": {"iterations": 4, "kernel_radius": 2, "sigma": 1.0},
        "motion": {"max_translation": 2.0, "max_rotation_deg": 1.0},
    },
    "model": {"channels": 32, "window": 1, "dca_blocks": 4, "mask_threshold": 0.5},
    "loss": {"lambda_f": 2.5, "lambda_s": 0.25, "lambda_c": 1.0, "lambda_y": 1.0},
    "train": {
        "learning_rate": 1e-4,
        "beta1": 0.9,
        "beta2": 0.999,
        "batch_size": 4,
        "total_steps": 2000,
        "crop_size": 64,
        "checkpoint_interval": 500,
        "reverse_time_prob": 0.5,
    },
    "infer": {"window": None, "threshold": None},
    "serve": {"port": 8008, "host": "127.0.0.1", "workdir": "sessions", "ui_dir": None},
}


class ConfigError(ValueError):
    """Invalid configuration; the message names every offending key."""


def default_config():
    return copy.deepcopy(DEFAULTS)


def _unknown_keys(cfg, schema, prefix=""):
    bad = []
    for key, value in cfg.items():
        path = f"{prefix}{key}"
        if key not in schema:
            bad.append(path)
        elif isinstance(value, dict) and isinstance(schema[key], dict):
            bad.extend(_unknown_keys(value, schema[key], prefix=path + "."))
    return bad


def _merge(base, overlay):
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = value


def parse_override(text):
    """``a.b.c=value`` with JSON-typed values; bare words stay strings."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def apply_override(cfg, key, value):
    parts = key.split(".")
    node = cfg
    schema = DEFAULTS
    for i, part in enumerate(parts):
        if not isinstance(schema, dict) or part not in schema:
            raise ConfigError(f"unknown config key: {'.'.join(parts[: i + 1])}")
        schema = schema[part]
        if i == len(parts) - 1:
            node[part] = value
        else:
            node = node.setdefault(part, {})


def load_config(path=None, overrides=()):
    """Defaults <- file <- overrides, with unknown keys rejected en masse."""
    cfg = default_config()
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}")
        bad = _unknown_keys(data, DEFAULTS)
        if bad:
            raise ConfigError("unknown config keys: " + ", ".join(sorted(bad)))
        _merge(cfg, data)
    for item in overrides:
        key, value = item if isinstance(item, tuple) else parse_override(item)
        apply_override(cfg, key, value)
    return cfg


def snapshot_config(cfg, out_dir, name="resolved_config.json"):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(json.dumps(cfg, indent=1, sort_keys=True) + "\n")
    return path


def stroke_spec_from(cfg):
    s = cfg["data"]["stroke"]
    return StrokeSpec(
        num_strokes=tuple(s["num_strokes"]),
        vertices_per_stroke=tuple(s["vertices"]),
        brush_width=tuple(s["brush_width"]),
        max_turn_angle=math.radians(s["max_turn_deg"]),
        segment_length=tuple(s["segment_length"]),
        seed=cfg["seed"],
    )


def smooth_spec_from(cfg):
    s = cfg["data"]["smooth"]
    return SmoothSpec(
        iterations=s["iterations"], kernel_radius=s["kernel_radius"], kernel_sigma=s["sigma"]
    )


def motion_spec_from(cfg):
    m = cfg["data"]["motion"]
    return MotionSpec(
        max_translation=m["max_translation"], max_rotation_deg=m["max_rotation_deg"]
    )


def model_config_from(cfg):
    m = cfg["model"]
    return ModelConfig(
        channels=m["channels"],
        window=m["window"],
        dca_blocks=m["dca_blocks"],
        mask_threshold=m["mask_threshold"],
        seed=cfg["seed"],
    )


def optim_config_from(cfg):
    t = cfg["train"]
    return OptimConfig(
        learning_rate=t["learning_rate"],
        beta1=t["beta1"],
        beta2=t["beta2"],
        batch_size=t["batch_size"],
        total_steps=t["total_steps"],
        seed=cfg["seed"],
        crop_size=t["crop_size"],
        checkpoint_interval=t["checkpoint_interval"],
        reverse_time_prob=t["reverse_time_prob"],
    )


def loss_weights_from(cfg):
    return LossWeights(**cfg["loss"])
