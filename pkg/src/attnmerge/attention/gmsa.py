"""Granular multi-head self-attention over 2x2 subregions."""

import math
from typing import Any, List, Tuple

import numpy as np

from attnmerge.tensor import (
    Module,
    Tensor,
    TensorError,
    add,
    block_diag,
    concat,
    matmul,
    reshape,
    reshape_permute,
    scale,
    softmax_rows,
    swap_last,
    take,
)

from .base import AttentionError, AttentionInputs, AttentionMap, Ordering
from .msa import QKVProjection, merge_heads, split_heads
from .rpb import RPBTable, table_size

SUBREGION = 4


def partition_2x2(features: Tensor) -> Tensor:
    """
    ``[B, H, W, C]`` -> ``[B, (H/2)(W/2), 4, C]``.

    Subregion ``(wr, wc)`` (row-major) holds pixels ``(2wr+ir, 2wc+ic)`` for
    ``(ir, ic)`` in row-major order.

    Raises:
        AttentionError: If H or W is odd
    """
    if features.ndim != 4:
        raise AttentionError(f"partition_2x2 expects [B, H, W, C], got {features.shape}")
    bsz, h, w, c = features.shape
    if h % 2 or w % 2:
        raise AttentionError(f"partition_2x2 needs even extents, got {h}x{w}")

    windows = reshape_permute(features, (bsz, h // 2, 2, w // 2, 2, c), (0, 1, 3, 2, 4, 5))
    return reshape(windows, (bsz, (h // 2) * (w // 2), SUBREGION, c))


def unpartition_2x2(windows: Tensor, height: int, width: int) -> Tensor:
    """Inverse of :func:`partition_2x2`."""
    bsz, n, _, c = windows.shape
    if n != (height // 2) * (width // 2):
        raise AttentionError(f"{n} subregions do not tile a {height}x{width} grid")
    grid = reshape_permute(windows, (bsz, height // 2, width // 2, 2, 2, c), (0, 1, 3, 2, 4, 5))
    return reshape(grid, (bsz, height, width, c))


def subregion_inputs(windows: Tensor, projections: QKVProjection) -> AttentionInputs:
    """``[B, N, 4, C]`` windows -> Q/K/V ``[B, N, heads, 4, d]``."""
    q, k, v = projections.flat(windows)
    return AttentionInputs(
        split_heads(q, projections.heads),
        split_heads(k, projections.heads),
        split_heads(v, projections.heads),
    )


def subregion_block_maps(inputs: AttentionInputs, rpb: RPBTable) -> Tensor:
    """
    Attention of every subregion at once: ``[B, N, heads, 4, 4]`` from
    ``[B, N, heads, 4, d]`` inputs.

    Raises:
        AttentionError: If ``rpb`` is not a 2x2 table for the same heads
    """
    if rpb.window != (2, 2) or rpb.heads != inputs.heads:
        raise AttentionError(
            f"granular attention needs a 2x2 RPB table with {inputs.heads} heads, "
            f"got window {rpb.window} with {rpb.heads} heads"
        )
    scores = scale(matmul(inputs.q, swap_last(inputs.k)), 1.0 / math.sqrt(inputs.d_k))
    scores = add(scores, rpb.bias())
    try:
        return softmax_rows(scores)
    except TensorError as e:
        raise AttentionError(f"granular attention scores are not finite: {e}") from e


def gmsa_subregion_maps(
    features: Tensor, projections: QKVProjection, rpb: RPBTable, scale_id: int = 0
) -> List[AttentionMap]:
    """
    One ``[B, heads, 4, 4]`` map per subregion of a raster ``[B, H, W, C]`` map.

    Projection weights and the RPB table are shared by all subregions; the
    list follows row-major subregion order.
    """
    inputs = subregion_inputs(partition_2x2(features), projections)
    blocks = subregion_block_maps(inputs, rpb)
    bsz, n_sub, heads, _, _ = blocks.shape

    maps = []
    for s in range(n_sub):
        block = reshape(take(blocks, np.array([s]), axis=1), (bsz, heads, SUBREGION, SUBREGION))
        maps.append(AttentionMap(block, Ordering.raster(), scale_id))
    return maps


def gmsa_assemble(blocks: List[AttentionMap]) -> AttentionMap:
    """
    Place subregion maps on the diagonal of a ``4N x 4N`` map (subregion-major order).

    Raises:
        AttentionError: If the list is empty or block shapes differ
    """
    if not blocks:
        raise AttentionError("gmsa_assemble needs at least one block")

    shape = blocks[0].values.shape
    for block in blocks:
        if block.values.shape != shape:
            raise AttentionError(
                f"inconsistent block shapes: {shape} vs {block.values.shape}"
            )

    *lead, heads, b, _ = shape
    stacked = concat(
        [reshape(block.values, (*lead, heads, 1, b, b)) for block in blocks], axis=-3
    )
    return AttentionMap(block_diag(stacked), Ordering.nested(1), blocks[0].scale_id)


def _heads_first(x: Tensor) -> Tensor:
    """``[B, N, heads, 4, k]`` -> ``[B, heads, 4N, k]``."""
    bsz, n_sub, heads, b, k = x.shape
    moved = reshape_permute(x, x.shape, (0, 2, 1, 3, 4))
    return reshape(moved, (bsz, heads, n_sub * b, k))


class GranularSelfAttention(Module):
    """
    GMSA module over tokens already grouped in fours (nested order).

    Holds bias-free Q/K/V projections and a zero-initialised 9-entry RPB
    table shared by every subregion.
    """

    def __init__(
        self,
        channels: int,
        heads: int,
        rng: np.random.Generator,
        dtype: Any = "f64",
        scale_id: int = 0,
    ) -> None:
        super().__init__()
        self.scale_id = scale_id
        self.add_child("qkv", QKVProjection(channels, heads, rng, dtype))
        zeros = np.zeros((heads, table_size((2, 2))))
        self.add_parameter("rpb", zeros.astype(self.qkv.q.weight.dtype))

    def rpb_table(self) -> RPBTable:
        return RPBTable.granular(self.rpb)

    def _blocks(self, tokens: Tensor) -> Tuple[Tensor, AttentionInputs]:
        if tokens.ndim != 3:
            raise AttentionError(f"expected [B, n, C] tokens, got {tokens.shape}")
        bsz, n, c = tokens.shape
        if n % SUBREGION:
            raise AttentionError(f"{n} tokens do not group into 2x2 subregions")
        windows = reshape(tokens, (bsz, n // SUBREGION, SUBREGION, c))
        inputs = subregion_inputs(windows, self.qkv)
        return subregion_block_maps(inputs, self.rpb_table()), inputs

    def __call__(self, tokens: Tensor, ordering: Ordering) -> Tuple[AttentionMap, Tensor]:
        """
        Block-diagonal map and per-head values for ``[B, n, C]`` tokens.

        Consecutive groups of four tokens form the subregions, which holds for
        any nested ordering of depth >= 1.

        Returns:
            (assembled ``[B, heads, n, n]`` map, values ``[B, heads, n, d]``)
        """
        blocks, inputs = self._blocks(tokens)
        # [B, N, heads, 4, 4] -> [B, heads, N, 4, 4]
        per_head = reshape_permute(blocks, blocks.shape, (0, 2, 1, 3, 4))
        assembled = AttentionMap(block_diag(per_head), ordering, self.scale_id)
        return assembled, _heads_first(inputs.v)

    def block_output(self, tokens: Tensor) -> Tensor:
        """
        Attention output computed subregion by subregion, ``[B, n, C]``.

        Equals the assembled map times V without materialising the zeros.
        """
        blocks, inputs = self._blocks(tokens)
        mixed = _heads_first(matmul(blocks, inputs.v))
        return merge_heads(mixed)
