"""Attention-map merging, mask templates and nested/raster dimension correspondence."""

from .ammm import merge_maps, reduce_heads, upsample_attention
from .base import MergeError
from .dcm import OrderingSpec, dcm, dcm_attention, inverse_dcm, nest_features
from .mask import GRANULARITIES, MaskTemplate, build_mask

__all__ = [
    "MergeError",
    "MaskTemplate",
    "GRANULARITIES",
    "build_mask",
    "upsample_attention",
    "merge_maps",
    "reduce_heads",
    "OrderingSpec",
    "dcm",
    "inverse_dcm",
    "nest_features",
    "dcm_attention",
]
