"""Corruption synthesis: composite natural-image noise into clean clips.

A clip is corrupted by one stroke-mask trajectory: the frame-0 strokes are
sampled once, then drift across frames under a bounded random-walk affine
jitter (translate/rotate the polylines, re-rasterize). Each frame's binary
mask is extended to a soft alpha band and the noise patch is alpha-blended
in, which avoids the crisp synthetic edges that would give the corruption
away.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .masks import (
    COVERAGE_MAX,
    COVERAGE_MIN,
    SmoothSpec,
    StrokeCoverageError,
    StrokeSpec,
    Stroke,
    coverage,
    extend_mask_alpha,
    rasterize_strokes,
    sample_strokes,
)


@dataclass(frozen=True)
class SourceClip:
    """An ordered clean frame sequence. Frames are float32 HxWx3 in [0, 1]."""

    frames: list
    clip_id: str
    fps: float = 24.0

    def __post_init__(self):
        if len(self.frames) < 2:
            raise ValueError(f"clip {self.clip_id!r} needs at least 2 frames")
        shape = self.frames[0].shape
        for i, f in enumerate(self.frames):
            if f.shape != shape:
                raise ValueError(f"clip {self.clip_id!r}: frame {i} shape {f.shape} != {shape}")
        if self.fps <= 0:
            raise ValueError("fps must be positive")


@dataclass(frozen=True)
class NoiseBank:
    """Natural-image patches used as corruption content.

    Patches must come from a pool disjoint from the clips they corrupt; the
    caller vouches for that via ``source_ids``.
    """

    patches: list
    source_ids: list

    def __post_init__(self):
        if len(self.patches) != len(self.source_ids):
            raise ValueError("patches and source_ids must align")
        if not self.patches:
            raise ValueError("noise bank is empty")

    def pick(self, rng, height, width, exclude_id=None):
        """Pick a patch (avoiding ``exclude_id``) and fit it to the frame size."""
        candidates = [i for i, sid in enumerate(self.source_ids) if sid != exclude_id]
        if not candidates:
            raise ValueError(f"no noise patch outside source {exclude_id!r}")
        idx = candidates[int(rng.integers(0, len(candidates)))]
        return fit_patch(self.patches[idx], height, width), self.source_ids[idx]


def fit_patch(img, height, width):
    """Deterministic center-crop to the target aspect ratio, then bilinear resize."""
    img = np.asarray(img, dtype=np.float32)
    h, w = img.shape[:2]
    scale = max(height / h, width / w)
    crop_h = min(h, int(round(height / scale)))
    crop_w = min(w, int(round(width / scale)))
    top = (h - crop_h) // 2
    left = (w - crop_w) // 2
    img = img[top : top + crop_h, left : left + crop_w]
    if img.shape[:2] != (height, width):
        pil = Image.fromarray(np.clip(img * 255.0, 0, 255).astype(np.uint8))
        img = np.asarray(pil.resize((width, height), Image.BILINEAR), dtype=np.float32) / 255.0
    return img


@dataclass(frozen=True)
class MotionSpec:
    """Per-frame affine step bounds for the mask trajectory.

    Steps accumulate as a random walk. Fixed ``translation`` / ``rotation_deg``
    override the random sampling (useful for controlled fixtures).
    """

    max_translation: float = 3.0
    max_rotation_deg: float = 2.0
    translation: tuple | None = None
    rotation_deg: float | None = None

    def step(self, rng):
        if self.translation is not None:
            dx, dy = self.translation
        else:
            dx = rng.uniform(-self.max_translation, self.max_translation)
            dy = rng.uniform(-self.max_translation, self.max_translation)
        if self.rotation_deg is not None:
            dtheta = math.radians(self.rotation_deg)
        else:
            dtheta = math.radians(rng.uniform(-self.max_rotation_deg, self.max_rotation_deg))
        return dx, dy, dtheta


def transform_strokes(strokes, translation, angle, pivot):
    """Rotate stroke polylines about ``pivot`` then translate; radii unchanged."""
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    out = []
    for stroke in strokes:
        pts = (stroke.points - pivot) @ rot.T + pivot + np.asarray(translation)
        out.append(Stroke(points=pts, radius=stroke.radius))
    return out


def stroke_pivot(strokes):
    return np.concatenate([s.points for s in strokes]).mean(axis=0)


@dataclass
class CorruptedClip:
    """A synthesized training clip: corrupted frames plus full supervision.

    ``noise`` keeps the blended patch around so the composite identities
    (x == y off-mask, x == noise on-mask) stay checkable after the fact.
    """

    frames: list
    gt_frames: list
    masks: list
    alphas: list
    manifest: dict = field(default_factory=dict)
    noise: np.ndarray | None = None

    def __len__(self):
        return len(self.frames)


def composite_frame(y, u, alpha):
    """Blend noise into a clean frame: x = (1 - alpha) * y + alpha * u, clamped."""
    y = np.asarray(y, dtype=np.float32)
    u = np.asarray(u, dtype=np.float32)
    alpha = np.asarray(alpha, dtype=np.float32)
    if y.shape != u.shape or alpha.shape != y.shape[:2]:
        raise ValueError(f"shape mismatch: y {y.shape}, u {u.shape}, alpha {alpha.shape}")
    a = alpha[..., None]
    return np.clip((1.0 - a) * y + a * u, 0.0, 1.0)


def _mask_trajectory(height, width, stroke_spec, motion, num_frames, rng, max_retries=100):
    """Sample strokes + jitter walk such that every frame's coverage is in bounds."""
    for _ in range(max_retries):
        strokes = sample_strokes(height, width, stroke_spec, rng)
        pivot = stroke_pivot(strokes)
        tx = ty = theta = 0.0
        masks, ok = [], True
        for t in range(num_frames):
            if t > 0:
                dx, dy, dtheta = motion.step(rng)
                tx, ty, theta = tx + dx, ty + dy, theta + dtheta
            frame_strokes = (
                strokes if t == 0 else transform_strokes(strokes, (tx, ty), theta, pivot)
            )
            mask = rasterize_strokes(frame_strokes, height, width)
            if not COVERAGE_MIN <= coverage(mask) <= COVERAGE_MAX:
                ok = False
                break
            masks.append(mask)
        if ok:
            return masks
    raise StrokeCoverageError(
        f"no {num_frames}-frame mask trajectory satisfied coverage bounds in {max_retries} tries"
    )


def synthesize_clip(src, bank, stroke, smooth, motion, rng, seed=None):
    """Corrupt a source clip with one jittered stroke-mask trajectory.

    One noise patch (never drawn from the clip's own source) serves the whole
    clip, like a static overlay revealed through the moving holes. Returns a
    :class:`CorruptedClip` whose manifest records the provenance needed to
    regenerate it.
    """
    height, width = src.frames[0].shape[:2]
    masks = _mask_trajectory(height, width, stroke, motion, len(src.frames), rng)
    patch, noise_id = bank.pick(rng, height, width, exclude_id=src.clip_id)
    frames, alphas = [], []
    for y, mask in zip(src.frames, masks):
        alpha = extend_mask_alpha(mask, smooth)
        frames.append(composite_frame(y, patch, alpha))
        alphas.append(alpha)
    manifest = {
        "clip_id": src.clip_id,
        "num_frames": len(src.frames),
        "height": height,
        "width": width,
        "noise_ids": [noise_id],
        "seed": seed,
    }
    return CorruptedClip(
        frames=frames,
        gt_frames=list(src.frames),
        masks=masks,
        alphas=alphas,
        manifest=manifest,
        noise=patch,
    )


def make_texture(height, width, rng, smooth_passes=2):
    """A colored random texture with broad structure; the raw material for clips."""
    from scipy import ndimage

    img = rng.random((height, width, 3))
    for _ in range(smooth_passes):
        img = ndimage.uniform_filter(img, size=(5, 5, 1), mode="wrap")
    yy, xx = np.meshgrid(np.linspace(0, 1, height), np.linspace(0, 1, width), indexing="ij")
    phase = rng.uniform(0, 2 * math.pi, size=3)
    freq = rng.uniform(2.0, 6.0, size=3)
    waves = np.stack(
        [0.5 + 0.5 * np.sin(2 * math.pi * f * (xx + yy) + p) for f, p in zip(freq, phase)], axis=-1
    )
    img = 0.65 * (img - img.min()) / (np.ptp(img) + 1e-9) + 0.35 * waves
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def load_source_clips(source_dir, height, width, num_frames):
    """Each subdirectory of PNGs becomes one clip, fitted to the target size."""
    from .storage import read_image

    source_dir = Path(source_dir)
    clips = []
    for sub in sorted(p for p in source_dir.iterdir() if p.is_dir()):
        paths = sorted(sub.glob("*.png"))[:num_frames]
        if len(paths) < 2:
            continue
        frames = [fit_patch(read_image(p), height, width) for p in paths]
        clips.append(SourceClip(frames=frames, clip_id=sub.name))
    if not clips:
        raise ValueError(f"no usable clips (>= 2 PNG frames each) under {source_dir}")
    return clips


def load_noise_bank(noise_dir):
    """Every PNG in the directory becomes a noise patch."""
    from .storage import read_image

    noise_dir = Path(noise_dir)
    paths = sorted(noise_dir.glob("*.png"))
    if not paths:
        raise ValueError(f"no PNG noise images under {noise_dir}")
    return NoiseBank(
        patches=[np.asarray(read_image(p), dtype=np.float32) for p in paths],
        source_ids=[p.stem for p in paths],
    )


def procedural_noise_bank(height, width, seed, count=4):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA11CE]))
    return NoiseBank(
        patches=[make_texture(height, width, rng) for _ in range(count)],
        source_ids=[f"texture{i:02d}" for i in range(count)],
    )


def synthesize_corpus(out_root, *, height, width, frames_per_clip, clips, stroke, smooth,
                      motion, seed, pan_speed=3.0, source_dir=None, noise_dir=None):
    """Build a whole dataset tree: per-split clip directories plus the manifest.

    Without ``source_dir``/``noise_dir`` the corpus is fully procedural:
    panning (or static) texture clips corrupted by textures from a disjoint
    seed stream. Deterministic in (inputs, seed, parameters).
    """
    from .storage import write_clip, write_manifest

    bank = (
        load_noise_bank(noise_dir)
        if noise_dir
        else procedural_noise_bank(height, width, seed)
    )
    sources = (
        load_source_clips(source_dir, height, width, frames_per_clip) if source_dir else None
    )
    records = []
    for split_idx, (split, count) in enumerate(sorted(clips.items())):
        for i in range(count):
            rng = np.random.default_rng(np.random.SeedSequence([seed, split_idx, i]))
            if sources is not None:
                base = sources[i % len(sources)]
                src = SourceClip(
                    frames=base.frames, clip_id=f"{split}_{base.clip_id}_{i:04d}", fps=base.fps
                )
            else:
                if i % 2 == 0:
                    angle = rng.uniform(0, 2 * math.pi)
                    speed = pan_speed * rng.uniform(0.5, 1.0)
                    pan = (speed * math.cos(angle), speed * math.sin(angle))
                else:
                    pan = (0.0, 0.0)
                src = make_pan_clip(f"{split}_{i:04d}", height, width, frames_per_clip, rng, pan)
            clip = synthesize_clip(src, bank, stroke, smooth, motion, rng, seed=seed)
            records.append(write_clip(out_root, split, clip))
    write_manifest(out_root, records)
    return records


def make_pan_clip(clip_id, height, width, num_frames, rng, pan=(3.0, 1.0), fps=24.0):
    """Procedural source clip: a camera pan over a static texture.

    ``pan`` is the per-frame (dx, dy) in pixels; (0, 0) gives a static scene.
    """
    dx, dy = pan
    pad_x = int(math.ceil(abs(dx) * (num_frames - 1)))
    pad_y = int(math.ceil(abs(dy) * (num_frames - 1)))
    canvas = make_texture(height + pad_y, width + pad_x, rng)
    frames = []
    for t in range(num_frames):
        ox = int(round(dx * t)) if dx >= 0 else pad_x + int(round(dx * t))
        oy = int(round(dy * t)) if dy >= 0 else pad_y + int(round(dy * t))
        frames.append(canvas[oy : oy + height, ox : ox + width].copy())
    return SourceClip(frames=frames, clip_id=clip_id, fps=fps)
