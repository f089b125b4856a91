"""Global and granular multi-head self-attention."""

from .base import AttentionError, AttentionInputs, AttentionMap, Ordering
from .gmsa import (
    GranularSelfAttention,
    gmsa_assemble,
    gmsa_subregion_maps,
    partition_2x2,
    subregion_block_maps,
    subregion_inputs,
    unpartition_2x2,
)
from .msa import (
    MultiHeadSelfAttention,
    QKVProjection,
    attention_map,
    attention_output,
    dense_masked_attention_map,
    merge_heads,
    split_heads,
)
from .rpb import RPBTable, raster_coords, relative_position_index, table_size

__all__ = [
    "AttentionError",
    "AttentionInputs",
    "AttentionMap",
    "Ordering",
    "GranularSelfAttention",
    "gmsa_assemble",
    "gmsa_subregion_maps",
    "partition_2x2",
    "subregion_block_maps",
    "subregion_inputs",
    "unpartition_2x2",
    "MultiHeadSelfAttention",
    "QKVProjection",
    "attention_map",
    "attention_output",
    "dense_masked_attention_map",
    "merge_heads",
    "split_heads",
    "RPBTable",
    "raster_coords",
    "relative_position_index",
    "table_size",
]
