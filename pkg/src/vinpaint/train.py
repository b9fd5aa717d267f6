"""Training loop: teacher-forced completion, dual mask supervision, cycle terms.

The completion network always receives the ground-truth mask of the target
frame; predicted masks enter the loss only through the cycle terms and the
mask network's own supervision. Batches are a pure function of (seed, step):
each epoch is a fresh deterministic permutation and per-sample augmentation
bits come from counter-based generators, so a resumed run reproduces an
uninterrupted one bit for bit.
"""

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .losses import LossWeights, NonFiniteLossError, cycle_losses, loss_mask, loss_reconstruction, total_loss
from .models import InpaintingModel, ModelConfig, load_checkpoint, save_checkpoint
from .models.checkpoint import restore_optimizer
from .storage import load_clip_arrays, read_manifest


class ConfigurationError(ValueError):
    """A training run was asked to start from an unusable configuration."""


@dataclass(frozen=True)
class OptimConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 4
    total_steps: int = 2000
    seed: int = 0
    crop_size: int = 64
    checkpoint_interval: int = 500
    reverse_time_prob: float = 0.5

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1 or self.total_steps < 0:
            raise ValueError("batch_size must be >= 1 and total_steps >= 0")
        if not 0.0 <= self.reverse_time_prob <= 1.0:
            raise ValueError("reverse_time_prob must lie in [0, 1]")


@dataclass
class TrainSample:
    """One batched training sample (torch tensors, NCHW, masks binary float)."""

    target: torch.Tensor
    refs: list
    gt: torch.Tensor
    mask: torch.Tensor
    next_frame: torch.Tensor
    next_mask: torch.Tensor
    next_gt: torch.Tensor

    def __post_init__(self):
        shape = self.target.shape
        for name in ("gt", "next_frame", "next_gt"):
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} shape differs from target")
        for m in (self.mask, self.next_mask):
            if m.shape[-2:] != shape[-2:]:
                raise ValueError("mask spatial dims differ from frames")
            vals = torch.unique(m)
            if not bool(((vals == 0) | (vals == 1)).all()):
                raise ValueError("masks must be binary")


def to_tensor(frame):
    """HWC float [0,1] numpy -> (3,H,W) float32 tensor; HW masks -> (1,H,W)."""
    arr = np.asarray(frame, dtype=np.float32)
    if arr.ndim == 2:
        return torch.from_numpy(arr).unsqueeze(0)
    return torch.from_numpy(np.transpose(arr, (2, 0, 1)))


def reference_indices(t, length, window):
    """Temporal neighbors t-n..t-1, t+1..t+n, clamped into the clip."""
    idx = list(range(t - window, t)) + list(range(t + 1, t + window + 1))
    return [min(max(i, 0), length - 1) for i in idx]


class ClipDataset:
    """All clips of a dataset split held in memory (desk scale)."""

    def __init__(self, root, split="train"):
        self.root = Path(root)
        records = [r for r in read_manifest(self.root) if r.split == split]
        self.records = records
        self.clips = [load_clip_arrays(self.root, rec) for rec in records]
        # usable target positions: need a successor frame for mask supervision
        self.samples = [
            (ci, t) for ci, rec in enumerate(records) for t in range(rec.num_frames - 1)
        ]

    def __len__(self):
        return len(self.samples)

    def build_sample(self, sample_id, window, crop_size, rng, reverse_prob=0.5):
        """Assemble one (possibly time-reversed, possibly cropped) sample."""
        clip_idx, t = self.samples[sample_id]
        arrays = self.clips[clip_idx]
        length = arrays["frames"].shape[0]
        reverse = bool(rng.random() < reverse_prob)
        index = (lambda i: length - 1 - i) if reverse else (lambda i: i)
        h, w = arrays["frames"].shape[1:3]
        cs = min(crop_size, h, w)
        top = int(rng.integers(0, h - cs + 1)) if h > cs else 0
        left = int(rng.integers(0, w - cs + 1)) if w > cs else 0

        def frame(kind, i):
            a = arrays[kind][index(i)][top : top + cs, left : left + cs]
            return to_tensor(a.astype(np.float32))

        refs = [frame("frames", r) for r in reference_indices(t, length, window)]
        return {
            "target": frame("frames", t),
            "refs": refs,
            "gt": frame("gt", t),
            "mask": frame("masks", t),
            "next_frame": frame("frames", t + 1),
            "next_mask": frame("masks", t + 1),
            "next_gt": frame("gt", t + 1),
        }


class SampleIndexer:
    """Deterministic shuffled-epoch batching as a pure function of the step."""

    def __init__(self, num_samples, batch_size, seed):
        if num_samples < 1:
            raise ConfigurationError("dataset holds no usable samples")
        self.num_samples = num_samples
        self.batch_size = batch_size
        self.seed = seed
        self._perm_cache = {}

    def _perm(self, epoch):
        if epoch not in self._perm_cache:
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, epoch]))
            self._perm_cache[epoch] = rng.permutation(self.num_samples)
        return self._perm_cache[epoch]

    def batch(self, step):
        """Sample ids plus a per-slot RNG for augmentation decisions."""
        out = []
        for slot in range(self.batch_size):
            g = step * self.batch_size + slot
            epoch, within = divmod(g, self.num_samples)
            sample_id = int(self._perm(epoch)[within])
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, g, 7]))
            out.append((sample_id, rng))
        return out


def collate(samples):
    refs = [torch.stack([s["refs"][r] for s in samples]) for r in range(len(samples[0]["refs"]))]
    stack = lambda key: torch.stack([s[key] for s in samples])
    return TrainSample(
        target=stack("target"),
        refs=refs,
        gt=stack("gt"),
        mask=stack("mask"),
        next_frame=stack("next_frame"),
        next_mask=stack("next_mask"),
        next_gt=stack("next_gt"),
    )


class Trainer:
    """Single-writer training driver around one model and one dataset."""

    def __init__(self, model, dataset, optim_config=None, weights=None, out_dir=None):
        self.model = model
        self.dataset = dataset
        self.optim = optim_config or OptimConfig()
        self.weights = weights or LossWeights()
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.optimizer = torch.optim.Adam(
            model.parameters(),
            lr=self.optim.learning_rate,
            betas=(self.optim.beta1, self.optim.beta2),
        )
        self.indexer = SampleIndexer(len(dataset), self.optim.batch_size, self.optim.seed)
        self.step_count = 0

    def make_batch(self, step):
        window = self.model.config.window
        parts = [
            self.dataset.build_sample(
                sid, window, self.optim.crop_size, rng, self.optim.reverse_time_prob
            )
            for sid, rng in self.indexer.batch(step)
        ]
        return collate(parts)

    def compute_losses(self, sample):
        """Full forward pass; returns (total tensor, LossReport)."""
        comp = self.model.completion
        ctx = comp.prepare(sample.target, sample.refs)
        completed, feature = comp.complete(ctx, sample.target, sample.mask)
        l_f = loss_reconstruction(completed, sample.gt)
        # same-frame and next-frame mask predictions in one stacked pass
        soft = self.model.predict_mask(
            torch.cat([sample.target, sample.next_frame]),
            torch.cat([completed, completed]),
            torch.cat([feature, feature]),
        )
        soft_same, soft_next = soft.chunk(2, dim=0)
        l_s = 0.5 * (loss_mask(soft_same, sample.mask) + loss_mask(soft_next, sample.next_mask))
        phi = lambda refs, target, mask: comp.complete(ctx, target, mask)
        l_y, l_m = cycle_losses(
            sample,
            phi,
            self.model.predict_mask,
            threshold=self.model.config.mask_threshold,
            first_pass=(completed, feature),
            mask_pred=soft_same,
        )
        return total_loss(l_f, l_s, l_y, l_m, self.weights)

    def train_step(self, sample):
        """One Adam update. A non-finite loss aborts before touching params."""
        total, report = self.compute_losses(sample)
        if not torch.isfinite(total):
            raise NonFiniteLossError(report)
        self.optimizer.zero_grad(set_to_none=True)
        total.backward()
        self.optimizer.step()
        self.step_count += 1
        return report

    def run(self, log_file=None, on_report=None):
        """Train to ``total_steps``, logging JSONL and checkpointing periodically."""
        reports = []
        log_fh = open(log_file, "a") if log_file else None
        try:
            while self.step_count < self.optim.total_steps:
                step = self.step_count
                report = self.train_step(self.make_batch(step))
                reports.append(report)
                if log_fh:
                    rec = {"step": step + 1, **report.to_dict(), "time": time.time()}
                    log_fh.write(json.dumps(rec) + "\n")
                    log_fh.flush()
                if on_report:
                    on_report(step + 1, report)
                if (
                    self.out_dir
                    and self.optim.checkpoint_interval > 0
                    and (step + 1) % self.optim.checkpoint_interval == 0
                ):
                    self.save(self.out_dir / f"checkpoint_{step + 1:07d}.ckpt")
        finally:
            if log_fh:
                log_fh.close()
        return reports

    def save(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        extra = {"optim": self.optim.__dict__, "weights": self.weights.__dict__}
        save_checkpoint(path, self.model, optimizer=self.optimizer, step=self.step_count, extra=extra)
        return Path(path)

    @classmethod
    def resume(cls, path, dataset, out_dir=None):
        """Rebuild a trainer whose continuation matches the uninterrupted run."""
        bundle = load_checkpoint(path)
        model = bundle.build_model()
        extra = bundle.extra or {}
        optim_config = OptimConfig(**extra["optim"]) if "optim" in extra else OptimConfig()
        weights = LossWeights(**extra["weights"]) if "weights" in extra else LossWeights()
        trainer = cls(model, dataset, optim_config, weights, out_dir=out_dir)
        if bundle.optim_state is not None:
            restore_optimizer(trainer.optimizer, bundle.optim_state)
        trainer.step_count = bundle.step
        return trainer


def train_loop(dataset_dir, model_config=None, optim_config=None, weights=None, out_dir=None,
               split="train", resume_from=None, on_report=None):
    """End-to-end training entry; returns the final checkpoint path.

    ``resume_from`` continues a checkpointed run; its reports from step k on
    are bit-identical to the uninterrupted run under the same seed.
    """
    dataset = ClipDataset(dataset_dir, split=split)
    if len(dataset) == 0:
        raise ConfigurationError(f"no usable training samples under {dataset_dir}")
    if resume_from is not None:
        trainer = Trainer.resume(resume_from, dataset, out_dir=out_dir)
    else:
        model = InpaintingModel(model_config or ModelConfig())
        trainer = Trainer(model, dataset, optim_config, weights, out_dir=out_dir)
    log_file = None
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        log_file = Path(out_dir) / "train_log.jsonl"
    trainer.run(log_file=log_file, on_report=on_report)
    final = Path(out_dir or ".") / "checkpoint_final.ckpt"
    trainer.save(final)
    return final
