"""Segmentation network: encoder, attention decoder, head and training."""

from .base import DecoderState, FeaturePyramid, ModelError
from .checkpoint import load_checkpoint, save_checkpoint
from .decoder import (
    DecoderLevel,
    DeepestDecoder,
    FinalFusion,
    GlobalAttentionLevel,
    GranularMergeLevel,
    PlainFusionLevel,
)
from .encoder import Encoder, ToyConvEncoder
from .head import MLPHead
from .network import ForwardTrace, Network, build_network, describe, parameter_count
from .registry import (
    decoder_registry,
    encoder_registry,
    get_decoder_registry,
    get_encoder_registry,
)
from .synthetic import SYNTHETIC_CLASSES, SyntheticBatch, rectangle_batch, rectangle_labels
from .training import AdamW, PolySchedule, TrainingHistory, fit, train_step

__all__ = [
    "DecoderState",
    "FeaturePyramid",
    "ModelError",
    "load_checkpoint",
    "save_checkpoint",
    "DecoderLevel",
    "DeepestDecoder",
    "FinalFusion",
    "GlobalAttentionLevel",
    "GranularMergeLevel",
    "PlainFusionLevel",
    "Encoder",
    "ToyConvEncoder",
    "MLPHead",
    "ForwardTrace",
    "Network",
    "build_network",
    "describe",
    "parameter_count",
    "decoder_registry",
    "encoder_registry",
    "get_decoder_registry",
    "get_encoder_registry",
    "SYNTHETIC_CLASSES",
    "SyntheticBatch",
    "rectangle_batch",
    "rectangle_labels",
    "AdamW",
    "PolySchedule",
    "TrainingHistory",
    "fit",
    "train_step",
]
