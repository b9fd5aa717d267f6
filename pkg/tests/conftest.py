"""Shared fixtures: small synthetic corpora and tiny models."""

import numpy as np
import pytest
import torch

from vinpaint.masks import SmoothSpec, StrokeSpec
from vinpaint.models import InpaintingModel, ModelConfig
from vinpaint.storage import write_clip, write_manifest
from vinpaint.synth import MotionSpec, NoiseBank, make_pan_clip, make_texture, synthesize_clip

TINY_STROKE = StrokeSpec(num_strokes=(1, 2), vertices_per_stroke=(3, 5), brush_width=(5.0, 9.0))
TINY_SMOOTH = SmoothSpec(iterations=3, kernel_radius=2, kernel_sigma=1.0)


def build_corpus(root, num_clips=2, frames=4, size=48, seed=0, split="train", pans=None):
    """Write a small deterministic corpus; returns its records."""
    rng = np.random.default_rng(seed)
    bank = NoiseBank(
        patches=[make_texture(size + 16, size + 16, rng) for _ in range(3)],
        source_ids=[f"pool{i}" for i in range(3)],
    )
    records = []
    for i in range(num_clips):
        pan = pans[i] if pans else ((2.0, 1.0) if i % 2 == 0 else (0.0, 0.0))
        src = make_pan_clip(f"clip{i:03d}", size, size, frames, rng, pan=pan)
        clip = synthesize_clip(
            src, bank, TINY_STROKE, TINY_SMOOTH, MotionSpec(1.5, 1.0), rng, seed=seed * 100 + i
        )
        records.append(write_clip(root, split, clip))
    write_manifest(root, records)
    return records


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    build_corpus(root, num_clips=2, frames=4, size=48, seed=1)
    return root


@pytest.fixture()
def tiny_model():
    return InpaintingModel(ModelConfig(channels=8, window=1, dca_blocks=1, seed=0))


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)
