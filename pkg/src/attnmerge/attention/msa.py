"""Global multi-head self-attention with relative position bias."""

import math
from typing import Any, Optional, Tuple

import numpy as np

from attnmerge.tensor import (
    Linear,
    Module,
    Tensor,
    TensorError,
    add,
    matmul,
    reshape,
    reshape_permute,
    scale,
    softmax_rows,
    swap_last,
)

from .base import AttentionError, AttentionInputs, AttentionMap, Ordering
from .rpb import RPBTable, raster_coords, table_size


def attention_map(
    inputs: AttentionInputs,
    rpb: Optional[RPBTable] = None,
    scale_id: int = 0,
    ordering: Optional[Ordering] = None,
) -> AttentionMap:
    """
    ``softmax(Q Kᵀ / sqrt(d_k) + B)`` per head, B looked up from ``rpb``.

    Raises:
        AttentionError: If the RPB table does not match heads or tokens, or a
            score is non-finite
    """
    if inputs.d_k <= 0:
        raise AttentionError("d_k must be positive")

    scores = scale(matmul(inputs.q, swap_last(inputs.k)), 1.0 / math.sqrt(inputs.d_k))

    if rpb is not None:
        if rpb.tokens != inputs.tokens or rpb.heads != inputs.heads:
            raise AttentionError(
                f"RPB table covers {rpb.heads} heads x {rpb.tokens} tokens, inputs have "
                f"{inputs.heads} heads x {inputs.tokens} tokens"
            )
        scores = add(scores, rpb.bias())

    try:
        values = softmax_rows(scores)
    except TensorError as e:
        raise AttentionError(f"attention scores are not finite: {e}") from e

    return AttentionMap(values, ordering or Ordering.raster(), scale_id)


def attention_output(am: AttentionMap, v: Tensor) -> Tensor:
    """
    ``AM · V`` per head.

    Raises:
        AttentionError: If heads or token counts disagree
    """
    if v.ndim < 3 or v.shape[:-1] != am.values.shape[:-1]:
        raise AttentionError(
            f"attention map {am.values.shape} and values {v.shape} disagree on heads/tokens"
        )
    return matmul(am.values, v)


def split_heads(x: Tensor, heads: int) -> Tensor:
    """``[..., n, heads*d]`` -> ``[..., heads, n, d]``."""
    *lead, n, channels = x.shape
    if channels % heads != 0:
        raise AttentionError(f"{channels} channels do not split into {heads} heads")
    d = channels // heads
    rank = len(lead)
    order = list(range(rank)) + [rank + 1, rank, rank + 2]
    return reshape_permute(x, (*lead, n, heads, d), order)


def merge_heads(x: Tensor) -> Tensor:
    """``[..., heads, n, d]`` -> ``[..., n, heads*d]``."""
    *lead, heads, n, d = x.shape
    rank = len(lead)
    order = list(range(rank)) + [rank + 1, rank, rank + 2]
    merged = reshape_permute(x, x.shape, order)
    return reshape(merged, (*lead, n, heads * d))


def dense_masked_attention_map(
    q: np.ndarray,
    k: np.ndarray,
    bias: Optional[np.ndarray] = None,
    allowed: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Plain-numpy attention map used as an oracle.

    Logits where ``allowed`` is False are set to ``-inf`` before the softmax.
    """
    d_k = q.shape[-1]
    logits = q @ np.swapaxes(k, -1, -2) / math.sqrt(d_k)
    if bias is not None:
        logits = logits + bias
    if allowed is not None:
        logits = np.where(allowed, logits, -np.inf)
    logits = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=-1, keepdims=True)


class QKVProjection(Module):
    """Bias-free query/key/value projections split into heads."""

    def __init__(self, channels: int, heads: int, rng: np.random.Generator, dtype: Any = "f64") -> None:
        super().__init__()
        if channels % heads != 0:
            raise AttentionError(f"{channels} channels do not split into {heads} heads")
        self.channels = channels
        self.heads = heads
        self.add_child("q", Linear(channels, channels, rng, dtype, bias=False))
        self.add_child("k", Linear(channels, channels, rng, dtype, bias=False))
        self.add_child("v", Linear(channels, channels, rng, dtype, bias=False))

    def flat(self, tokens: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
        """Projections before the head split, each ``[..., n, C]``."""
        return self.q(tokens), self.k(tokens), self.v(tokens)

    def __call__(self, tokens: Tensor) -> AttentionInputs:
        q, k, v = self.flat(tokens)
        return AttentionInputs(
            split_heads(q, self.heads), split_heads(k, self.heads), split_heads(v, self.heads)
        )


class MultiHeadSelfAttention(Module):
    """
    Global attention over every token of a ``height x width`` grid.

    The RPB window spans the whole grid, giving a ``(2h-1)(2w-1)``-entry
    table per head, zero-initialised. Tokens may arrive in any order as long
    as their grid coordinates are supplied.
    """

    def __init__(
        self,
        channels: int,
        heads: int,
        grid: Tuple[int, int],
        rng: np.random.Generator,
        dtype: Any = "f64",
        scale_id: int = 0,
    ) -> None:
        super().__init__()
        self.grid = grid
        self.scale_id = scale_id
        self.add_child("qkv", QKVProjection(channels, heads, rng, dtype))
        zeros = np.zeros((heads, table_size(grid)))
        self.add_parameter("rpb", zeros.astype(self.qkv.q.weight.dtype))

    def rpb_table(self, coords: Optional[np.ndarray] = None) -> RPBTable:
        if coords is None:
            coords = raster_coords(*self.grid)
        return RPBTable.for_coords(self.rpb, self.grid, coords)

    def __call__(
        self,
        tokens: Tensor,
        coords: Optional[np.ndarray] = None,
        ordering: Optional[Ordering] = None,
    ) -> Tuple[Tensor, AttentionMap, AttentionInputs]:
        """
        Attend over ``[B, n, C]`` tokens.

        Returns:
            (output tokens ``[B, n, C]``, attention map, projected inputs)
        """
        inputs = self.qkv(tokens)
        am = attention_map(inputs, self.rpb_table(coords), self.scale_id, ordering)
        return merge_heads(attention_output(am, inputs.v)), am, inputs
