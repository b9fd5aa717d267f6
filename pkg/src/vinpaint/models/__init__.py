from .completion import CompletionNetwork, TemporalAggregation
from .layers import (
    AlignmentModule,
    DCABlock,
    FrameDecoder,
    FrameEncoder,
    MaskDecoder,
    OffsetPredictor,
    ResidualBlock,
    bilinear_sample,
    bilinear_sample_map,
    deform_conv,
    pad_to_multiple,
    unpad,
)
from .maskpred import MaskPredictionNetwork, straight_through_binarize
from .model import InpaintingModel, ModelConfig
from .checkpoint import CheckpointBundle, load_checkpoint, save_checkpoint

__all__ = [
    "AlignmentModule",
    "CheckpointBundle",
    "CompletionNetwork",
    "DCABlock",
    "FrameDecoder",
    "FrameEncoder",
    "InpaintingModel",
    "MaskDecoder",
    "MaskPredictionNetwork",
    "ModelConfig",
    "OffsetPredictor",
    "ResidualBlock",
    "TemporalAggregation",
    "bilinear_sample",
    "bilinear_sample_map",
    "deform_conv",
    "load_checkpoint",
    "pad_to_multiple",
    "save_checkpoint",
    "straight_through_binarize",
    "unpad",
]
