"""Free-form stroke masks and their soft alpha extensions.

Binary corruption masks are unions of thick random-walk polylines ("brush
strokes"). A pixel belongs to a stroke iff its center lies within the brush
radius of the stroke's polyline, so rasterization is an exact distance test
and translating the polyline by an integer offset translates the raster.

The soft alpha map extends a binary mask outward by repeated Gaussian
blurring, re-imposing 1 on the original support after every pass. Inside the
mask alpha is exactly 1; outside it decays to 0 over a band of roughly
``iterations * kernel_radius`` pixels.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage


class StrokeCoverageError(RuntimeError):
    """Stroke sampling could not hit the coverage bounds within the retry budget."""


COVERAGE_MIN = 0.005
COVERAGE_MAX = 0.40


@dataclass(frozen=True)
class StrokeSpec:
    """Parameters for sampling free-form stroke masks.

    Ranges are inclusive ``(lo, hi)``. ``brush_width`` is the stroke diameter
    in pixels. ``segment_length`` is the per-step walk distance as a fraction
    of ``min(height, width)``.
    """

    num_strokes: tuple[int, int] = (1, 5)
    vertices_per_stroke: tuple[int, int] = (4, 12)
    brush_width: tuple[float, float] = (10.0, 40.0)
    max_turn_angle: float = math.radians(60.0)
    segment_length: tuple[float, float] = (0.06, 0.25)
    seed: int = 0

    def __post_init__(self):
        for name in ("num_strokes", "vertices_per_stroke", "brush_width", "segment_length"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} range is empty: ({lo}, {hi})")
        if self.brush_width[0] <= 0:
            raise ValueError(f"brush_width must be positive, got {self.brush_width}")
        if self.num_strokes[0] < 1:
            raise ValueError("need at least one stroke")
        if self.vertices_per_stroke[0] < 2:
            raise ValueError("a stroke needs at least two vertices")

    def scaled_to(self, height, width):
        """Scale the reference 256x256 brush proportionally to another resolution."""
        s = min(height, width) / 256.0
        lo, hi = self.brush_width
        return StrokeSpec(
            num_strokes=self.num_strokes,
            vertices_per_stroke=self.vertices_per_stroke,
            brush_width=(max(lo * s, 1.0), max(hi * s, 1.0)),
            max_turn_angle=self.max_turn_angle,
            segment_length=self.segment_length,
            seed=self.seed,
        )


@dataclass(frozen=True)
class SmoothSpec:
    """Iterative Gaussian smoothing parameters for the alpha extension band."""

    iterations: int = 4
    kernel_radius: int = 2
    kernel_sigma: float = 1.0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.kernel_radius < 1:
            raise ValueError("kernel_radius must be >= 1")
        if self.kernel_sigma <= 0:
            raise ValueError("kernel_sigma must be positive")


@dataclass(frozen=True)
class Stroke:
    """One brush stroke: polyline vertices (x, y) and the brush radius."""

    points: np.ndarray  # (V, 2) float64, columns (x, y)
    radius: float


def sample_strokes(height, width, spec, rng):
    """Draw a random set of strokes as bounded-turn random walks."""
    strokes = []
    n_strokes = int(rng.integers(spec.num_strokes[0], spec.num_strokes[1] + 1))
    seg_lo = spec.segment_length[0] * min(height, width)
    seg_hi = spec.segment_length[1] * min(height, width)
    for _ in range(n_strokes):
        n_pts = int(rng.integers(spec.vertices_per_stroke[0], spec.vertices_per_stroke[1] + 1))
        radius = rng.uniform(*spec.brush_width) / 2.0
        x = rng.uniform(0.1 * width, 0.9 * width)
        y = rng.uniform(0.1 * height, 0.9 * height)
        angle = rng.uniform(0.0, 2.0 * math.pi)
        pts = [(x, y)]
        for _ in range(n_pts - 1):
            angle += rng.uniform(-spec.max_turn_angle, spec.max_turn_angle)
            step = rng.uniform(seg_lo, seg_hi)
            x = min(max(x + step * math.cos(angle), 0.0), width - 1.0)
            y = min(max(y + step * math.sin(angle), 0.0), height - 1.0)
            pts.append((x, y))
        strokes.append(Stroke(points=np.asarray(pts, dtype=np.float64), radius=radius))
    return strokes


def rasterize_strokes(strokes, height, width):
    """Exact rasterization: pixel set iff its center is within radius of a polyline."""
    xs, ys = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    mask = np.zeros((height, width), dtype=bool)
    for stroke in strokes:
        pts = stroke.points
        r2 = stroke.radius * stroke.radius
        for a, b in zip(pts[:-1], pts[1:]):
            d = b - a
            len2 = float(d @ d)
            if len2 == 0.0:
                dist2 = (xs - a[0]) ** 2 + (ys - a[1]) ** 2
            else:
                t = ((xs - a[0]) * d[0] + (ys - a[1]) * d[1]) / len2
                np.clip(t, 0.0, 1.0, out=t)
                dist2 = (xs - (a[0] + t * d[0])) ** 2 + (ys - (a[1] + t * d[1])) ** 2
            mask |= dist2 <= r2
        if len(pts) == 1:
            mask |= (xs - pts[0, 0]) ** 2 + (ys - pts[0, 1]) ** 2 <= r2
    return mask


def coverage(mask):
    return float(np.count_nonzero(mask)) / mask.size


def sample_strokes_with_coverage(height, width, spec, rng, max_retries=100):
    """Resample strokes until the rasterized coverage lands in the allowed band."""
    for _ in range(max_retries):
        strokes = sample_strokes(height, width, spec, rng)
        frac = coverage(rasterize_strokes(strokes, height, width))
        if COVERAGE_MIN <= frac <= COVERAGE_MAX:
            return strokes
    raise StrokeCoverageError(
        f"could not reach coverage [{COVERAGE_MIN:.3%}, {COVERAGE_MAX:.1%}] in "
        f"{max_retries} tries at {height}x{width} with {spec}"
    )


def generate_stroke_mask(height, width, spec, rng=None):
    """Sample a free-form stroke mask whose coverage lies in [0.5%, 40%] of the frame."""
    if height < 32 or width < 32:
        raise ValueError(f"frame too small for stroke masks: {height}x{width}")
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    strokes = sample_strokes_with_coverage(height, width, spec, rng)
    return rasterize_strokes(strokes, height, width)


def gaussian_kernel(radius, sigma):
    """Dense (2r+1)^2 Gaussian kernel, normalized to sum 1."""
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma * sigma))
    return g / g.sum()


def extend_mask_alpha(mask, spec):
    """Blur the binary mask outward, keeping alpha pinned to 1 on the mask itself.

    Zero padding at the image border, so alpha stays 0 far from the mask.
    """
    mask = np.asarray(mask, dtype=bool)
    kernel = gaussian_kernel(spec.kernel_radius, spec.kernel_sigma)
    alpha = mask.astype(np.float64)
    for _ in range(spec.iterations):
        alpha = ndimage.convolve(alpha, kernel, mode="constant", cval=0.0)
        alpha[mask] = 1.0
    return np.clip(alpha, 0.0, 1.0).astype(np.float32)


def binarize_mask(soft, threshold=0.5):
    """Threshold a soft mask; values >= threshold become 1.

    Works on numpy arrays and torch tensors alike (returns the matching
    boolean type). Idempotent: binarizing a binary mask is a no-op.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    return soft >= threshold
