"""Building blocks: deformable sampling/convolution, alignment, encoder, decoders.

The deformable convolution is the v1 form: per-tap 2D offsets, no modulation
scalars. Sampling is plain bilinear interpolation with zero contribution from
out-of-bounds neighbors, implemented with gathers so gradients reach both the
source features and the offsets.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F

# 3x3 tap grid, row-major: (dy, dx) for tap n, n = (dy+1)*3 + (dx+1).
TAPS = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)]


def bilinear_sample_map(source, sx, sy):
    """Sample ``source`` (B,C,H,W) at fractional locations (sx, sy), each (B,H,W).

    Out-of-bounds corner neighbors contribute zero. Differentiable w.r.t. the
    source values and the sampling locations.
    """
    b, c, h, w = source.shape
    x0 = torch.floor(sx)
    y0 = torch.floor(sy)
    flat = source.reshape(b, c, h * w)
    out = source.new_zeros(b, c, *sx.shape[1:])
    for yi, wy in ((y0, y0 + 1.0 - sy), (y0 + 1.0, sy - y0)):
        for xi, wx in ((x0, x0 + 1.0 - sx), (x0 + 1.0, sx - x0)):
            valid = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
            idx = (yi.clamp(0, h - 1) * w + xi.clamp(0, w - 1)).long().reshape(b, 1, -1)
            vals = flat.gather(2, idx.expand(b, c, -1)).reshape(b, c, *sx.shape[1:])
            out = out + vals * (wx * wy * valid.to(source.dtype)).unsqueeze(1)
    return out


def bilinear_sample(feature, location):
    """Sample a single (C,H,W) feature map at one fractional (x, y) location."""
    x, y = location
    sx = feature.new_tensor([[[float(x)]]])
    sy = feature.new_tensor([[[float(y)]]])
    return bilinear_sample_map(feature.unsqueeze(0), sx, sy).reshape(feature.shape[0])


def deform_conv(source, offsets, weight, bias=None):
    """DCNv1 3x3 deformable convolution.

    ``offsets`` is (B, 18, H, W): channels (2n, 2n+1) hold the (dy, dx) offset
    of tap n at each location. Offsets are clamped to +-max(H, W) to keep the
    sampling finite. With all offsets zero this reduces to a standard
    zero-padded 3x3 convolution with the same ``weight`` and ``bias``.
    """
    b, c, h, w = source.shape
    n_taps = len(TAPS)
    if offsets.shape != (b, 2 * n_taps, h, w):
        raise ValueError(f"offset shape {tuple(offsets.shape)} does not match {(b, 18, h, w)}")
    bound = float(max(h, w))
    off = offsets.clamp(-bound, bound).reshape(b, n_taps, 2, h, w)
    taps = source.new_tensor(TAPS).reshape(1, n_taps, 2, 1, 1)
    base_y = torch.arange(h, dtype=source.dtype, device=source.device).view(1, 1, h, 1)
    base_x = torch.arange(w, dtype=source.dtype, device=source.device).view(1, 1, 1, w)
    sy = (base_y + taps[:, :, 0] + off[:, :, 0]).reshape(b, -1)
    sx = (base_x + taps[:, :, 1] + off[:, :, 1]).reshape(b, -1)
    samples = bilinear_sample_map(source, sx, sy).reshape(b, c, n_taps, h, w)
    out = torch.einsum("bcnhw,ocn->bohw", samples, weight.reshape(-1, c, n_taps))
    if bias is not None:
        out = out + bias.view(1, -1, 1, 1)
    return out


class OffsetPredictor(nn.Module):
    """Two 3x3 convs on concat(target, source) -> 18 offset channels.

    The last layer starts at zero so training begins as a plain convolution.
    """

    def __init__(self, channels):
        super().__init__()
        self.conv1 = nn.Conv2d(2 * channels, channels, 3, 1, 1)
        self.conv2 = nn.Conv2d(channels, 2 * len(TAPS), 3, 1, 1)
        nn.init.zeros_(self.conv2.weight)
        nn.init.zeros_(self.conv2.bias)

    def forward(self, target, source):
        return self.conv2(F.relu(self.conv1(torch.cat([target, source], dim=1))))


class DCABlock(nn.Module):
    """Deformable-convolution alignment block.

    Predicts sampling offsets from (target, source) features, then resamples
    the source through a deformable 3x3 kernel. No activation on the output.
    """

    def __init__(self, channels):
        super().__init__()
        self.offsets = OffsetPredictor(channels)
        self.kernel = nn.Conv2d(channels, channels, 3, 1, 1)

    def forward(self, source, target):
        if source.shape != target.shape:
            raise ValueError(f"source {tuple(source.shape)} != target {tuple(target.shape)}")
        theta = self.offsets(target, source)
        return deform_conv(source, theta, self.kernel.weight, self.kernel.bias)


class AlignmentModule(nn.Module):
    """A cascade of DCA blocks, each re-predicting offsets against the target."""

    def __init__(self, channels, num_blocks=4):
        super().__init__()
        if num_blocks < 0:
            raise ValueError("num_blocks must be >= 0")
        self.blocks = nn.ModuleList(DCABlock(channels) for _ in range(num_blocks))

    def forward(self, source, target):
        for block in self.blocks:
            source = block(source, target)
        return source


class ResidualBlock(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.conv2 = nn.Conv2d(channels, channels, 3, 1, 1)

    def forward(self, x):
        return x + self.conv2(F.relu(self.conv1(x)))


class FrameEncoder(nn.Module):
    """Frame -> stride-4 feature map: two stride-2 stages plus a residual trunk."""

    def __init__(self, channels, in_channels=3, num_res_blocks=4):
        super().__init__()
        self.conv_in = nn.Conv2d(in_channels, channels, 3, 1, 1)
        self.down1 = nn.Conv2d(channels, channels, 3, 2, 1)
        self.conv1 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.down2 = nn.Conv2d(channels, channels, 3, 2, 1)
        self.conv2 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.trunk = nn.Sequential(*(ResidualBlock(channels) for _ in range(num_res_blocks)))

    def forward(self, x):
        if not torch.isfinite(x).all():
            raise ValueError("non-finite values in encoder input")
        x = F.relu(self.conv_in(x))
        x = F.relu(self.conv1(F.relu(self.down1(x))))
        x = F.relu(self.conv2(F.relu(self.down2(x))))
        return self.trunk(x)


class FrameDecoder(nn.Module):
    """Stride-4 features -> full-resolution output in [0, 1] via sigmoid."""

    def __init__(self, channels, out_channels=3, num_res_blocks=4):
        super().__init__()
        self.trunk = nn.Sequential(*(ResidualBlock(channels) for _ in range(num_res_blocks)))
        self.up1 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.up2 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.head = nn.Conv2d(channels, out_channels, 3, 1, 1)

    def forward(self, x):
        x = self.trunk(x)
        x = F.relu(self.up1(F.interpolate(x, scale_factor=2, mode="nearest")))
        x = F.relu(self.up2(F.interpolate(x, scale_factor=2, mode="nearest")))
        out = torch.sigmoid(self.head(x))
        if not torch.isfinite(out).all():
            raise ValueError("non-finite activations in decoder output")
        return out


class MaskDecoder(nn.Module):
    """Mirror of the frame decoder with a single sigmoid channel."""

    def __init__(self, channels):
        super().__init__()
        self.fuse = nn.Conv2d(2 * channels, channels, 3, 1, 1)
        self.decoder = FrameDecoder(channels, out_channels=1)

    def forward(self, x):
        return self.decoder(F.relu(self.fuse(x)))


def pad_to_multiple(x, multiple=4, mode="replicate"):
    """Pad (B,C,H,W) on the bottom/right to a size multiple; returns (padded, (H, W))."""
    h, w = x.shape[-2:]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return x, (h, w)
    return F.pad(x, (0, pw, 0, ph), mode=mode), (h, w)


def unpad(x, size):
    h, w = size
    return x[..., :h, :w]
