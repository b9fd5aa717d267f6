"""Dataset directory layout, lossless 8-bit image IO, and the clip manifest.

Layout::

    <root>/<split>/<clip_id>/frames/00000.png   corrupted frames (RGB)
                             gt/00000.png       clean frames (RGB)
                             masks/00000.png    binary masks (L, 0/255)
                             alphas/00000.png   soft alphas (L)
    <root>/manifest.jsonl                       one JSON record per clip

Everything is 8-bit PNG, so values round-trip within one quantization step
of 1/255 and the corpus is byte-reproducible from (sources, seeds, config).
"""

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image

KINDS = ("frames", "gt", "masks", "alphas")


class MissingFileError(FileNotFoundError):
    """A manifest entry points at a file that does not exist."""


class ManifestError(RuntimeError):
    """Malformed manifest record."""


def frame_to_u8(frame):
    return np.clip(np.rint(np.asarray(frame, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def u8_to_frame(arr):
    return (np.asarray(arr, dtype=np.float32)) / 255.0


def write_image(path, array, binary=False):
    """Write a float [0,1] array (HxW or HxWx3) as an 8-bit PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if binary:
        u8 = (np.asarray(array) > 0).astype(np.uint8) * 255
    else:
        u8 = frame_to_u8(array)
    mode = "L" if u8.ndim == 2 else "RGB"
    Image.fromarray(u8, mode=mode).save(path, format="PNG")


def read_image(path, binary=False):
    """Read an 8-bit PNG back to float [0,1]; ``binary`` yields a bool mask."""
    path = Path(path)
    if not path.exists():
        raise MissingFileError(str(path))
    arr = np.asarray(Image.open(path))
    if binary:
        return arr > 127
    return u8_to_frame(arr)


@dataclass
class ClipRecord:
    """Manifest entry for one synthesized clip."""

    clip_id: str
    split: str
    num_frames: int
    height: int
    width: int
    seed: int | None = None
    noise_ids: tuple = ()

    @property
    def rel_dir(self):
        return f"{self.split}/{self.clip_id}"

    def frame_path(self, root, kind, index):
        if kind not in KINDS:
            raise ValueError(f"unknown kind {kind!r}")
        return Path(root) / self.rel_dir / kind / f"{index:05d}.png"


def write_clip(root, split, clip):
    """Write a CorruptedClip under the dataset root; returns its ClipRecord."""
    record = ClipRecord(
        clip_id=clip.manifest["clip_id"],
        split=split,
        num_frames=len(clip),
        height=clip.manifest["height"],
        width=clip.manifest["width"],
        seed=clip.manifest.get("seed"),
        noise_ids=tuple(clip.manifest.get("noise_ids", ())),
    )
    for i in range(len(clip)):
        write_image(record.frame_path(root, "frames", i), clip.frames[i])
        write_image(record.frame_path(root, "gt", i), clip.gt_frames[i])
        write_image(record.frame_path(root, "masks", i), clip.masks[i], binary=True)
        write_image(record.frame_path(root, "alphas", i), clip.alphas[i])
    return record


def write_manifest(root, records):
    """Write the line-delimited clip index. An empty dataset is a valid one."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    lines = []
    for rec in records:
        d = asdict(rec)
        d["noise_ids"] = list(rec.noise_ids)
        lines.append(json.dumps(d, sort_keys=True))
    (root / "manifest.jsonl").write_text("".join(line + "\n" for line in lines))


def read_manifest(root, validate=True):
    """Read the clip index; optionally check that every referenced file exists."""
    root = Path(root)
    path = root / "manifest.jsonl"
    if not path.exists():
        raise MissingFileError(str(path))
    records = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            d["noise_ids"] = tuple(d.get("noise_ids", ()))
            records.append(ClipRecord(**d))
        except (json.JSONDecodeError, TypeError) as e:
            raise ManifestError(f"{path}:{lineno}: {e}") from e
    if validate:
        for rec in records:
            for kind in KINDS:
                for i in range(rec.num_frames):
                    p = rec.frame_path(root, kind, i)
                    if not p.exists():
                        raise MissingFileError(str(p))
    return records


def load_clip_arrays(root, record):
    """Load all four per-frame array stacks of a clip."""
    out = {}
    for kind in KINDS:
        binary = kind == "masks"
        stack = [
            read_image(record.frame_path(root, kind, i), binary=binary)
            for i in range(record.num_frames)
        ]
        out[kind] = np.stack(stack)
    return out
