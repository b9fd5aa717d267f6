"""The completion network: encode, align references, aggregate, decode, paste back."""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .layers import AlignmentModule, FrameDecoder, FrameEncoder, pad_to_multiple, unpad


class TemporalAggregation(nn.Module):
    """Adaptive per-pixel aggregation of aligned reference features.

    Aggregation weights are a softmax over references of the channelwise dot
    product between 1x1-projected target (query) and aligned (key) features;
    the weighted value features, the target feature, and a stride-4 mask
    channel are fused by a 1x1 convolution.
    """

    def __init__(self, channels, num_refs):
        super().__init__()
        if num_refs < 1:
            raise ValueError("need at least one reference feature")
        self.num_refs = num_refs
        self.query = nn.Conv2d(channels, channels, 1)
        self.key = nn.Conv2d(channels, channels, 1)
        self.value = nn.Conv2d(channels, channels, 1)
        self.fuse = nn.Conv2d((num_refs + 1) * channels + 1, channels, 1)

    def weights(self, target_feat, aligned):
        """Per-pixel softmax weights over the reference axis, shape (B, R, H, W)."""
        if len(aligned) == 0:
            raise ValueError("empty reference list")
        q = self.query(target_feat)
        logits = torch.stack([(q * self.key(a)).sum(dim=1) for a in aligned], dim=1)
        return torch.softmax(logits, dim=1)

    def forward(self, target_feat, aligned, mask_feat):
        if len(aligned) != self.num_refs:
            raise ValueError(f"expected {self.num_refs} references, got {len(aligned)}")
        s = self.weights(target_feat, aligned)
        modulated = [self.value(a) * s[:, i : i + 1] for i, a in enumerate(aligned)]
        return self.fuse(torch.cat(modulated + [target_feat, mask_feat], dim=1))


@dataclass
class CompletionContext:
    """Mask-independent forward state, reusable across cycle passes."""

    target_feat: torch.Tensor
    aligned: list
    size: tuple


class CompletionNetwork(nn.Module):
    """Fill the masked regions of a target frame from its temporal neighbors.

    ``forward(target, refs, mask)`` returns the completed frame (with known
    pixels pasted back from the input) and the aggregated stride-4 feature
    that the mask prediction network consumes.
    """

    def __init__(self, channels=32, window=1, dca_blocks=4):
        super().__init__()
        if window < 1:
            raise ValueError("window must be >= 1")
        self.channels = channels
        self.window = window
        self.encoder = FrameEncoder(channels)
        self.alignment = AlignmentModule(channels, dca_blocks)
        self.aggregation = TemporalAggregation(channels, num_refs=2 * window)
        self.decoder = FrameDecoder(channels)

    def encode_frame(self, frame):
        """Frame (B,3,H,W) -> stride-4 feature; pads to a multiple of 4 first."""
        padded, _ = pad_to_multiple(frame)
        return self.encoder(padded)

    def prepare(self, target, refs):
        """Encode and align once; the result can complete any mask cheaply."""
        if len(refs) < 1:
            raise ValueError("need at least one reference frame")
        padded, size = pad_to_multiple(target)
        f_t = self.encoder(padded)
        # one batched pass over all references (rows are independent)
        refs_p = torch.cat([pad_to_multiple(r)[0] for r in refs], dim=0)
        f_r = self.encoder(refs_p)
        aligned_all = self.alignment(f_r, f_t.repeat(len(refs), 1, 1, 1))
        aligned = list(aligned_all.chunk(len(refs), dim=0))
        return CompletionContext(target_feat=f_t, aligned=aligned, size=size)

    def complete(self, ctx, target, mask):
        """Aggregate + decode under ``mask`` and paste the known pixels back."""
        mask = mask.to(target.dtype)
        mask_p, _ = pad_to_multiple(mask, mode="constant")
        mask_feat = F.avg_pool2d(mask_p, 4)
        fhat = self.aggregation(ctx.target_feat, ctx.aligned, mask_feat)
        decoded = unpad(self.decoder(fhat), ctx.size)
        completed = (1.0 - mask) * target + mask * decoded
        return completed, fhat

    def forward(self, target, refs, mask):
        return self.complete(self.prepare(target, refs), target, mask)
