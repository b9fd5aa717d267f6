"""Evaluation metrics: PSNR/SSIM for frames, IOU/BCE for masks, corpus reports.

BCE is literally the training mask loss (single shared implementation).
LPIPS and flow-warping error need pretrained networks and are deliberately
absent; their report fields stay null.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from scipy import ndimage

from .losses import loss_mask
from .storage import read_image

PSNR_CAP = 99.0


def psnr(a, b):
    """10*log10(1/MSE) on [0,1] frames, capped at 99 dB (identical frames hit the cap)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP)


def psnr_masked(a, b, mask):
    """PSNR restricted to the pixels where ``mask`` is set (hole-region PSNR)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    sel = np.asarray(mask, dtype=bool)
    if sel.shape != a.shape[:2]:
        raise ValueError("mask dims must match frame dims")
    if not sel.any():
        return PSNR_CAP
    diff = (a - b)[sel]
    mse = float(np.mean(diff**2))
    return PSNR_CAP if mse == 0.0 else min(10.0 * np.log10(1.0 / mse), PSNR_CAP)


def _gaussian_window(size=11, sigma=1.5):
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma * sigma))
    return g / g.sum()


def ssim(a, b, window_size=11, sigma=1.5, k1=0.01, k2=0.03):
    """Single-scale SSIM with a Gaussian window, channel-averaged, L=1.

    Windowed statistics are taken over the valid region (no padding), then
    averaged over all window positions.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.shape[0] < window_size or a.shape[1] < window_size:
        raise ValueError(f"frame smaller than the {window_size}x{window_size} window")
    if a.ndim == 2:
        a = a[..., None]
        b = b[..., None]
    c1 = (k1 * 1.0) ** 2
    c2 = (k2 * 1.0) ** 2
    win = _gaussian_window(window_size, sigma)
    r = window_size // 2
    valid = (slice(r, a.shape[0] - r), slice(r, a.shape[1] - r))

    def filt(img):
        return ndimage.convolve(img, win, mode="constant")[valid]

    vals = []
    for ch in range(a.shape[2]):
        x, y = a[..., ch], b[..., ch]
        mu_x, mu_y = filt(x), filt(y)
        sxx = filt(x * x) - mu_x * mu_x
        syy = filt(y * y) - mu_y * mu_y
        sxy = filt(x * y) - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
        den = (mu_x**2 + mu_y**2 + c1) * (sxx + syy + c2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))


def iou(pred, gt):
    """Intersection over union of two binary masks. Both empty -> 1.0."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    for m in (pred, gt):
        if m.dtype != bool and not np.all(np.isin(np.unique(m), (0, 1))):
            raise ValueError("iou expects binary masks")
    p = pred.astype(bool)
    g = gt.astype(bool)
    union = np.logical_or(p, g).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(p, g).sum() / union)


def bce_mask(pred_soft, gt):
    """Mean BCE in nats; the same function the training loss uses."""
    p = torch.from_numpy(np.asarray(pred_soft, dtype=np.float64))
    g = torch.from_numpy(np.asarray(gt, dtype=np.float64))
    return float(loss_mask(p, g))


@dataclass
class ClipMetrics:
    clip_id: str
    num_frames: int
    psnr: float
    ssim: float
    iou: float | None
    bce: float | None
    mask_frames: int


@dataclass
class EvalReport:
    """Frame-count-weighted corpus means plus the per-clip breakdown."""

    per_clip: list = field(default_factory=list)
    psnr: float = 0.0
    ssim: float = 0.0
    iou: float | None = None
    bce: float | None = None
    num_clips: int = 0
    num_frames: int = 0
    lpips: None = None
    e_warp: None = None

    def to_records(self):
        rows = [{"record": "clip", **c.__dict__} for c in self.per_clip]
        rows.append(
            {
                "record": "corpus",
                "psnr": self.psnr,
                "ssim": self.ssim,
                "iou": self.iou,
                "bce": self.bce,
                "num_clips": self.num_clips,
                "num_frames": self.num_frames,
                "lpips": self.lpips,
                "e_warp": self.e_warp,
            }
        )
        return rows

    def table(self):
        lines = [f"{'clip':<16}{'PSNR↑':>9}{'SSIM↑':>9}{'BCE↓':>9}{'IOU↑':>9}{'frames':>8}"]
        for c in self.per_clip:
            bce = f"{c.bce:.4f}" if c.bce is not None else "-"
            iou_s = f"{c.iou:.4f}" if c.iou is not None else "-"
            lines.append(
                f"{c.clip_id:<16}{c.psnr:>9.3f}{c.ssim:>9.4f}{bce:>9}{iou_s:>9}{c.num_frames:>8}"
            )
        bce = f"{self.bce:.4f}" if self.bce is not None else "-"
        iou_s = f"{self.iou:.4f}" if self.iou is not None else "-"
        lines.append(
            f"{'corpus':<16}{self.psnr:>9.3f}{self.ssim:>9.4f}{bce:>9}{iou_s:>9}{self.num_frames:>8}"
        )
        return "\n".join(lines)

    def write(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            for row in self.to_records():
                fh.write(json.dumps(row) + "\n")
        path.with_suffix(".txt").write_text(self.table() + "\n")
        return path


class CorpusMismatchError(RuntimeError):
    """Results and ground truth do not line up; lists every offender."""


def _clip_dirs(root):
    return sorted(p for p in Path(root).iterdir() if p.is_dir())


def evaluate_clip(result_dir, gt_dir):
    """Metrics for one clip: completed-vs-gt frames and predicted-vs-gt masks."""
    result_dir, gt_dir = Path(result_dir), Path(gt_dir)
    frame_paths = sorted((result_dir / "frames").glob("*.png"))
    gt_paths = sorted((gt_dir / "gt").glob("*.png"))
    problems = []
    if len(frame_paths) != len(gt_paths):
        problems.append(f"{result_dir.name}: {len(frame_paths)} frames vs {len(gt_paths)} gt")
    for kind, base in (("masks", result_dir), ("masks", gt_dir)):
        if not (base / kind).is_dir():
            problems.append(f"missing {base / kind}")
    if problems:
        raise CorpusMismatchError("; ".join(problems))
    provenance = None
    prov_path = result_dir / "provenance.json"
    if prov_path.exists():
        provenance = json.loads(prov_path.read_text())["provenance"]
    psnrs, ssims, ious, bces = [], [], [], []
    for t, (fp, gp) in enumerate(zip(frame_paths, gt_paths)):
        completed = read_image(fp)
        gt = read_image(gp)
        psnrs.append(psnr(completed, gt))
        ssims.append(ssim(completed, gt))
        if provenance is not None and provenance[t] == "annotated":
            continue  # annotated masks are inputs, not predictions
        pred_mask = read_image(result_dir / "masks" / fp.name, binary=True)
        gt_mask = read_image(gt_dir / "masks" / fp.name, binary=True)
        ious.append(iou(pred_mask, gt_mask))
        soft_path = result_dir / "soft_masks" / fp.name
        soft = read_image(soft_path) if soft_path.exists() else pred_mask.astype(np.float64)
        bces.append(bce_mask(soft, gt_mask))
    if not ious and provenance is not None:  # every frame annotated: fall back to all
        for fp in frame_paths:
            pred_mask = read_image(result_dir / "masks" / fp.name, binary=True)
            gt_mask = read_image(gt_dir / "masks" / fp.name, binary=True)
            ious.append(iou(pred_mask, gt_mask))
            bces.append(bce_mask(pred_mask.astype(np.float64), gt_mask))
    return ClipMetrics(
        clip_id=result_dir.name,
        num_frames=len(frame_paths),
        psnr=float(np.mean(psnrs)),
        ssim=float(np.mean(ssims)),
        iou=float(np.mean(ious)) if ious else None,
        bce=float(np.mean(bces)) if bces else None,
        mask_frames=len(ious),
    )


def evaluate_corpus(results_dir, gt_dir):
    """Aggregate metrics over every clip present in the results directory.

    ``gt_dir`` is a dataset split directory holding ``<clip_id>/gt`` and
    ``<clip_id>/masks``. Corpus means weight clips by frame count.
    """
    results_dir, gt_dir = Path(results_dir), Path(gt_dir)
    result_clips = _clip_dirs(results_dir)
    if not result_clips:
        raise CorpusMismatchError(f"no clip directories under {results_dir}")
    missing = [str(gt_dir / c.name) for c in result_clips if not (gt_dir / c.name).is_dir()]
    if missing:
        raise CorpusMismatchError("missing ground truth: " + ", ".join(missing))
    report = EvalReport()
    for clip_dir in result_clips:
        metrics = evaluate_clip(clip_dir, gt_dir / clip_dir.name)
        report.per_clip.append(metrics)
    frames = sum(c.num_frames for c in report.per_clip)
    report.num_clips = len(report.per_clip)
    report.num_frames = frames
    report.psnr = float(sum(c.psnr * c.num_frames for c in report.per_clip) / frames)
    report.ssim = float(sum(c.ssim * c.num_frames for c in report.per_clip) / frames)
    mask_frames = sum(c.mask_frames for c in report.per_clip if c.iou is not None)
    if mask_frames:
        report.iou = float(
            sum(c.iou * c.mask_frames for c in report.per_clip if c.iou is not None) / mask_frames
        )
        report.bce = float(
            sum(c.bce * c.mask_frames for c in report.per_clip if c.bce is not None) / mask_frames
        )
    return report
