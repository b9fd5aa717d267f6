"""The combined model: completion and mask prediction with shared alignment."""

from dataclasses import asdict, dataclass

import torch
import torch.nn as nn

from .completion import CompletionNetwork
from .maskpred import MaskPredictionNetwork


@dataclass(frozen=True)
class ModelConfig:
    channels: int = 32
    window: int = 1
    dca_blocks: int = 4
    mask_threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if not 0 < self.mask_threshold < 1:
            raise ValueError("mask_threshold must lie in (0, 1)")
        if not 0 <= self.dca_blocks <= 6:
            raise ValueError("dca_blocks must lie in [0, 6]")

    def to_dict(self):
        return asdict(self)


class InpaintingModel(nn.Module):
    """Completion network plus mask prediction network, alignment shared."""

    def __init__(self, config=None):
        super().__init__()
        self.config = config or ModelConfig()
        with torch.random.fork_rng():
            torch.manual_seed(self.config.seed)
            self.completion = CompletionNetwork(
                channels=self.config.channels,
                window=self.config.window,
                dca_blocks=self.config.dca_blocks,
            )
            self.maskpred = MaskPredictionNetwork(
                self.config.channels, alignment=self.completion.alignment
            )

    def complete_frame(self, refs, target, mask):
        """Returns (completed frame, aggregated feature)."""
        return self.completion(target, refs, mask)

    def predict_mask(self, query, completed, completed_feat):
        """Returns the query frame's soft corruption mask."""
        return self.maskpred(query, completed, completed_feat)
