"""Merging of a deeper-scale attention map into the current scale."""

import logging

from attnmerge.attention import AttentionMap, Ordering
from attnmerge.tensor import (
    TensorError,
    add,
    group_mean,
    kron_expand,
    mul,
    normalize_rows,
    scale,
)

from .base import MergeError
from .mask import BLOCK, MaskTemplate

logger = logging.getLogger(__name__)

ROW_SUM_FLOOR = 1e-12


def upsample_attention(am: AttentionMap) -> AttentionMap:
    """
    Expand an ``n x n`` map to ``4n x 4n``: ``U = (1/4) (am ⊗ J4)``.

    Every child row of a parent keeps the parent's row mass, which relies on
    the four children of each deep token being contiguous.

    Raises:
        MergeError: If ``am`` is not in a nested ordering
    """
    if not am.ordering.is_nested:
        raise MergeError(
            f"upsample_attention needs a nested ordering, got {am.ordering}"
        )
    values = scale(kron_expand(am.values, BLOCK), 1.0 / BLOCK)
    return AttentionMap(
        values,
        Ordering.nested(am.ordering.depth + 1),
        am.scale_id,
        am.source_scales,
    )


def merge_maps(
    deep: AttentionMap,
    fine: AttentionMap,
    mask: MaskTemplate,
    renormalize: bool = True,
) -> AttentionMap:
    """
    ``M = (1 - E) ∘ upsample(deep) + E ∘ fine``, optionally row-renormalized.

    The result is ordered ``nested(deep.depth + 1)`` and records the scales
    of both operands.

    Raises:
        MergeError: On a head, size or batch mismatch, a non-nested deep map,
            or a zero-sum row under renormalization
    """
    if deep.heads != fine.heads:
        raise MergeError(f"Head mismatch: deep map has {deep.heads}, fine map {fine.heads}")
    if fine.tokens != BLOCK * deep.tokens:
        raise MergeError(
            f"Fine map must cover {BLOCK * deep.tokens} tokens for a {deep.tokens}-token "
            f"deep map, got {fine.tokens}"
        )
    if mask.size != fine.tokens:
        raise MergeError(f"Mask size {mask.size} does not match fine map size {fine.tokens}")

    upsampled = upsample_attention(deep)
    if upsampled.values.shape != fine.values.shape:
        raise MergeError(
            f"Upsampled deep map {upsampled.values.shape} and fine map "
            f"{fine.values.shape} disagree"
        )

    dtype = fine.values.dtype
    merged = add(
        mul(upsampled.values, mask.complement(dtype)),
        mul(fine.values, mask.tensor(dtype)),
    )

    if renormalize:
        try:
            merged = normalize_rows(merged, min_sum=ROW_SUM_FLOOR)
        except TensorError as e:
            raise MergeError(f"Cannot renormalize merged map: {e}") from e

    sources = tuple(sorted(set(deep.source_scales) | set(fine.source_scales)))
    logger.debug(
        "Merged %d-token map into %d tokens (%s mask, renormalize=%s)",
        deep.tokens, fine.tokens, mask.granularity, renormalize,
    )
    return AttentionMap(merged, upsampled.ordering, fine.scale_id, sources)


def reduce_heads(am: AttentionMap, heads: int) -> AttentionMap:
    """
    Average consecutive groups of heads down to ``heads``.

    Lets a deeper level with more heads feed a merge at a level with fewer.

    Raises:
        MergeError: If the head count is not a multiple of ``heads``
    """
    if am.heads == heads:
        return am
    if heads <= 0 or am.heads % heads != 0:
        raise MergeError(f"Cannot reduce {am.heads} heads to {heads}")

    values = group_mean(am.values, axis=-3, groups=am.heads // heads)
    return AttentionMap(values, am.ordering, am.scale_id, am.source_scales)

