"""Whole-video completion from sparse annotations.

Every frame is owned by its nearest annotated frame (ties go to the earlier
annotation). Within a segment the completion sweeps outward from the
annotation: the mask of each frame is predicted from its already-completed
neighbor, then the frame is completed under that mask. Reference frames
prefer already-completed neighbors and fall back to the raw input.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .masks import binarize_mask
from .storage import read_image, write_image
from .train import reference_indices, to_tensor


@dataclass
class AnnotationSet:
    """Sparse human-provided masks: frame index -> binary HxW mask."""

    entries: dict
    length: int

    def __post_init__(self):
        if not self.entries:
            raise ValueError("annotation set is empty")
        for idx, mask in self.entries.items():
            if not 0 <= idx < self.length:
                raise ValueError(f"annotation index {idx} outside [0, {self.length})")
            arr = np.asarray(mask)
            if arr.dtype != bool:
                uniq = np.unique(arr)
                if not np.all(np.isin(uniq, (0, 1))):
                    raise ValueError(f"annotation at {idx} is not binary")

    def owner_of(self, t):
        """Nearest annotated index; ties resolved to the earlier annotation."""
        return min(sorted(self.entries), key=lambda a: (abs(t - a), a))


@dataclass(frozen=True)
class PlanStep:
    frame: int
    direction: str  # "forward" | "backward"
    source: int  # owning annotation index


@dataclass
class PropagationPlan:
    steps: list
    annotated: list

    def owned_by(self, source):
        return [s for s in self.steps if s.source == source]


def build_plan(annotations):
    """Schedule every non-annotated frame exactly once, sweeping out from owners."""
    annotated = sorted(annotations.entries)
    owners = {t: annotations.owner_of(t) for t in range(annotations.length)}
    steps = []
    for a in annotated:
        backward = sorted((t for t in owners if owners[t] == a and t < a), reverse=True)
        forward = sorted(t for t in owners if owners[t] == a and t > a)
        steps.extend(PlanStep(t, "backward", a) for t in backward)
        steps.extend(PlanStep(t, "forward", a) for t in forward)
    return PropagationPlan(steps=steps, annotated=annotated)


@dataclass
class InpaintResult:
    """Completed clip plus the masks that drove it and their provenance."""

    frames: list
    masks: list
    soft_masks: list
    provenance: list
    annotations: AnnotationSet
    features: list = field(default_factory=list, repr=False)

    def __len__(self):
        return len(self.frames)


class TorchAdapter:
    """Bridges numpy frames to a trained model; pure inference, no grads."""

    def __init__(self, model):
        self.model = model.eval()

    def complete(self, refs, target, mask):
        with torch.no_grad():
            refs_t = [to_tensor(r).unsqueeze(0) for r in refs]
            target_t = to_tensor(target).unsqueeze(0)
            mask_t = torch.from_numpy(np.asarray(mask, dtype=np.float32)).reshape(
                1, 1, *mask.shape
            )
            out, feat = self.model.complete_frame(refs_t, target_t, mask_t)
        return np.transpose(out[0].numpy(), (1, 2, 0)), feat

    def predict(self, query, completed, feature):
        with torch.no_grad():
            soft = self.model.predict_mask(
                to_tensor(query).unsqueeze(0), to_tensor(completed).unsqueeze(0), feature
            )
        return soft[0, 0].numpy()


def _reference_frames(t, length, window, frames, completed):
    return [
        completed[i] if completed[i] is not None else frames[i]
        for i in reference_indices(t, length, window)
    ]


def _run_steps(frames, annotations, adapter, window, threshold, state, annotate, steps,
               progress=None):
    """Complete the ``annotate`` frames, then execute the plan ``steps``."""
    completed, feats, masks, soft, prov = state
    length = len(frames)
    done = 0
    for a in annotate:
        mask = np.asarray(annotations.entries[a]) > 0
        refs = _reference_frames(a, length, window, frames, completed)
        completed[a], feats[a] = adapter.complete(refs, frames[a], mask)
        masks[a] = mask
        soft[a] = mask.astype(np.float32)
        prov[a] = "annotated"
        done += 1
        if progress:
            progress(done)
    for step in steps:
        t = step.frame
        neighbor = t - 1 if step.direction == "forward" else t + 1
        soft_t = adapter.predict(frames[t], completed[neighbor], feats[neighbor])
        mask_t = np.asarray(binarize_mask(soft_t, threshold))
        refs = _reference_frames(t, length, window, frames, completed)
        completed[t], feats[t] = adapter.complete(refs, frames[t], mask_t)
        masks[t] = mask_t
        soft[t] = np.asarray(soft_t, dtype=np.float32)
        prov[t] = "predicted"
        done += 1
        if progress:
            progress(done)


def propagate(frames, annotations, adapter, window=1, threshold=0.5, progress=None):
    """Complete a whole clip from its sparse annotations."""
    length = len(frames)
    if length < 1:
        raise ValueError("empty clip")
    if annotations.length != length:
        raise ValueError(f"annotation length {annotations.length} != clip length {length}")
    plan = build_plan(annotations)
    state = ([None] * length, [None] * length, [None] * length, [None] * length, [None] * length)
    total = length

    def report(done):
        if progress:
            progress(done, total)

    _run_steps(
        frames, annotations, adapter, window, threshold, state, plan.annotated, plan.steps, report
    )
    completed, feats, masks, soft, prov = state
    return InpaintResult(
        frames=completed,
        masks=masks,
        soft_masks=soft,
        provenance=prov,
        annotations=annotations,
        features=feats,
    )


def refine(frames, result, new_index, new_mask, adapter, window=1, threshold=0.5, progress=None):
    """Add one annotation and recompute only the segment it now owns."""
    entries = dict(result.annotations.entries)
    entries[new_index] = np.asarray(new_mask) > 0
    annotations = AnnotationSet(entries=entries, length=result.annotations.length)
    plan = build_plan(annotations)
    owned = plan.owned_by(new_index)
    state = (
        list(result.frames),
        list(result.features),
        list(result.masks),
        list(result.soft_masks),
        list(result.provenance),
    )
    total = 1 + len(owned)

    def report(done):
        if progress:
            progress(done, total)

    _run_steps(
        frames, annotations, adapter, window, threshold, state, [new_index], owned, report
    )
    completed, feats, masks, soft, prov = state
    return InpaintResult(
        frames=completed,
        masks=masks,
        soft_masks=soft,
        provenance=prov,
        annotations=annotations,
        features=feats,
    )


def load_clip_frames(clip_dir):
    """Read a clip: either ``<dir>/frames/*.png`` or ``<dir>/*.png``."""
    clip_dir = Path(clip_dir)
    frame_dir = clip_dir / "frames" if (clip_dir / "frames").is_dir() else clip_dir
    paths = sorted(frame_dir.glob("*.png"))
    if not paths:
        raise FileNotFoundError(f"no PNG frames under {frame_dir}")
    return [read_image(p) for p in paths]


def write_result(out_dir, result):
    """Persist completed frames, masks, soft masks, and provenance."""
    out_dir = Path(out_dir)
    for i in range(len(result)):
        write_image(out_dir / "frames" / f"{i:05d}.png", result.frames[i])
        write_image(out_dir / "masks" / f"{i:05d}.png", result.masks[i], binary=True)
        write_image(out_dir / "soft_masks" / f"{i:05d}.png", result.soft_masks[i])
    record = {
        "provenance": result.provenance,
        "annotated": sorted(result.annotations.entries),
        "num_frames": len(result),
    }
    (out_dir / "provenance.json").write_text(json.dumps(record, indent=1))
    return out_dir


def inpaint_directory(clip_dir, annotation_paths, adapter, out_dir, window=1, threshold=0.5):
    """Batch mode: clip directory + annotation mask files -> result directory."""
    frames = load_clip_frames(clip_dir)
    entries = {int(i): read_image(p, binary=True) for i, p in annotation_paths.items()}
    annotations = AnnotationSet(entries=entries, length=len(frames))
    result = propagate(frames, annotations, adapter, window=window, threshold=threshold)
    return write_result(out_dir, result)
