"""Decoder stages: global attention at the deepest level, attention variants
at the two middle levels, and a convolutional fusion at H/4.

Decoder tokens stay in nested order from the deepest grid downwards. Each
middle level repeats every token four times (its 2x2 children are then
contiguous), brings the encoder skip into the same nested order and fuses the
two with a linear projection. Only :class:`FinalFusion` converts back to
raster order, where features meet a convolution.
"""

import logging
from abc import ABC, abstractmethod
from typing import Any, Tuple

import numpy as np

from attnmerge.attention import (
    GranularSelfAttention,
    MultiHeadSelfAttention,
    Ordering,
    attention_output,
    merge_heads,
)
from attnmerge.merge import (
    OrderingSpec,
    build_mask,
    dcm,
    merge_maps,
    nest_features,
    reduce_heads,
)
from attnmerge.tensor import (
    Conv2d,
    Linear,
    Module,
    Tensor,
    add,
    concat,
    gelu,
    repeat_tokens,
    reshape,
    upsample_nearest,
)

from .base import DecoderState, ModelError
from .registry import decoder_registry

logger = logging.getLogger(__name__)


class DeepestDecoder(Module):
    """
    Global multi-head self-attention over every stage-4 token.

    The output carries no residual or output projection: for a single token
    the map is ``[[1]]`` and the features equal V.
    """

    def __init__(
        self,
        channels: int,
        heads: int,
        grid: Tuple[int, int],
        rng: np.random.Generator,
        dtype: Any = "f64",
    ) -> None:
        super().__init__()
        self.grid = grid
        self.add_child("msa", MultiHeadSelfAttention(channels, heads, grid, rng, dtype, scale_id=0))

    def __call__(self, feat4: Tensor) -> DecoderState:
        if feat4.ndim != 4 or feat4.shape[1:3] != self.grid:
            raise ModelError(
                f"Deepest decoder expects a [B, {self.grid[0]}, {self.grid[1]}, C] map, "
                f"got {feat4.shape}"
            )
        bsz, h, w, c = feat4.shape
        tokens = reshape(feat4, (bsz, h * w, c))
        features, am, inputs = self.msa(tokens, ordering=Ordering.nested(0))
        return DecoderState(
            features=features,
            spec=OrderingSpec(h, w, 0),
            level=0,
            attention=am,
            values=inputs.v,
            attention_output=features,
        )


class DecoderLevel(Module, ABC):
    """
    One middle decoder level: upsample, fuse the skip, then attend.

    Subclasses differ in the attention applied to the fused tokens.
    """

    def __init__(
        self,
        trunk_channels: int,
        skip_channels: int,
        channels: int,
        heads: int,
        grid: Tuple[int, int],
        level: int,
        rng: np.random.Generator,
        dtype: Any = "f64",
        mask_granularity: str = "block",
        renormalize: bool = True,
    ) -> None:
        super().__init__()
        self.channels = channels
        self.heads = heads
        self.grid = grid
        self.level = level
        self.mask_granularity = mask_granularity
        self.renormalize = renormalize
        self.add_child("proj", Linear(trunk_channels + skip_channels, channels, rng, dtype))
        self.build_attention(rng, dtype)

    def build_attention(self, rng: np.random.Generator, dtype: Any) -> None:
        """Create the attention children; plain fusion has none."""

    def fuse(self, state: DecoderState, skip: Tensor) -> Tuple[Tensor, OrderingSpec]:
        """
        Upsampled trunk and nested skip, concatenated and projected.

        Raises:
            ModelError: If the skip is not twice the current grid
        """
        h, w = state.spec.height, state.spec.width
        if skip.ndim != 4 or skip.shape[1:3] != (2 * h, 2 * w):
            raise ModelError(
                f"Level {self.level} skip must be [B, {2 * h}, {2 * w}, C], got {skip.shape}"
            )
        if skip.shape[1:3] != self.grid:
            raise ModelError(f"Level {self.level} is built for a {self.grid} grid, got {skip.shape[1:3]}")

        spec = OrderingSpec(2 * h, 2 * w, state.spec.depth + 1)
        trunk = repeat_tokens(state.features, 4, axis=1)
        fused = concat([trunk, nest_features(skip, spec)], axis=-1)
        return self.proj(fused), spec

    @abstractmethod
    def __call__(self, state: DecoderState, skip: Tensor) -> DecoderState:
        pass


@decoder_registry.register_decorator("gmsa_ammm")
class GranularMergeLevel(DecoderLevel):
    """
    Granular attention whose block map is merged with the deeper map.

    The deeper map's heads are averaged in consecutive groups down to this
    level's head count before merging. The merged map is the attention that
    mixes V.
    """

    def build_attention(self, rng: np.random.Generator, dtype: Any) -> None:
        self.add_child(
            "gmsa",
            GranularSelfAttention(self.channels, self.heads, rng, dtype, scale_id=self.level),
        )

    def __call__(self, state: DecoderState, skip: Tensor) -> DecoderState:
        if state.attention is None:
            raise ModelError("Granular merging needs the deeper level's attention map")

        tokens, spec = self.fuse(state, skip)
        fine, values = self.gmsa(tokens, spec.ordering)
        deep = reduce_heads(state.attention, self.heads)
        mask = build_mask(spec.tokens, self.mask_granularity)
        merged = merge_maps(deep, fine, mask, self.renormalize)

        attn_out = merge_heads(attention_output(merged, values))
        logger.debug("Level %d merged attention over %d tokens", self.level, spec.tokens)
        return DecoderState(
            features=add(tokens, attn_out),
            spec=spec,
            level=self.level,
            attention=merged,
            values=values,
            attention_output=attn_out,
        )


@decoder_registry.register_decorator("msa")
class GlobalAttentionLevel(DecoderLevel):
    """Global attention over every level token, without merging."""

    def build_attention(self, rng: np.random.Generator, dtype: Any) -> None:
        self.add_child(
            "msa",
            MultiHeadSelfAttention(
                self.channels, self.heads, self.grid, rng, dtype, scale_id=self.level
            ),
        )

    def __call__(self, state: DecoderState, skip: Tensor) -> DecoderState:
        tokens, spec = self.fuse(state, skip)
        attn_out, am, inputs = self.msa(tokens, coords=spec.coords(), ordering=spec.ordering)
        return DecoderState(
            features=add(tokens, attn_out),
            spec=spec,
            level=self.level,
            attention=am,
            values=inputs.v,
            attention_output=attn_out,
        )


@decoder_registry.register_decorator("none")
class PlainFusionLevel(DecoderLevel):
    """Skip fusion with a GELU and no attention."""

    def __call__(self, state: DecoderState, skip: Tensor) -> DecoderState:
        tokens, spec = self.fuse(state, skip)
        return DecoderState(features=gelu(tokens), spec=spec, level=self.level)


class FinalFusion(Module):
    """
    Raster conversion, 2x upsampling and stage-1 skip fusion at H/4.
    """

    def __init__(
        self,
        trunk_channels: int,
        skip_channels: int,
        out_channels: int,
        rng: np.random.Generator,
        dtype: Any = "f64",
    ) -> None:
        super().__init__()
        self.add_child(
            "conv", Conv2d(trunk_channels + skip_channels, out_channels, rng, dtype, kernel=3)
        )

    def concat_inputs(self, state: DecoderState, skip1: Tensor) -> Tensor:
        """``[B, 2H, 2W, C_trunk + C_skip]``: upsampled raster trunk, then the skip."""
        spec = state.spec
        bsz, _, c = state.features.shape
        if skip1.ndim != 4 or skip1.shape[1:3] != (2 * spec.height, 2 * spec.width):
            raise ModelError(
                f"Final skip must be [B, {2 * spec.height}, {2 * spec.width}, C], got {skip1.shape}"
            )

        raster = reshape(dcm(state.features, spec), (bsz, spec.height, spec.width, c))
        return concat([upsample_nearest(raster, 2), skip1], axis=-1)

    def __call__(self, state: DecoderState, skip1: Tensor) -> Tensor:
        return gelu(self.conv(self.concat_inputs(state, skip1)))
