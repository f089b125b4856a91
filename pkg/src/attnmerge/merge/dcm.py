"""Dimension correspondence between nested window order and raster order.

A nested order of depth d over an ``H x W`` token grid walks the top grid of
``(H / 2^d) x (W / 2^d)`` anchors in raster order and expands every anchor
into its four children, row-major inside each 2x2, recursively. One
reshape-permute step folds the outermost nesting level into the raster
walk, so converting depth d back to raster takes d steps.
"""

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from attnmerge.attention import AttentionMap, Ordering
from attnmerge.tensor import Tensor, reshape, reshape_permute, take, write_fixture

from .base import MergeError


def _morton_offsets(depth: int) -> np.ndarray:
    """``(row, col)`` offset of every low index inside a ``2^d`` tile, row bit first."""
    low = np.arange(4**depth)
    rows = np.zeros_like(low)
    cols = np.zeros_like(low)
    for level in range(depth):
        pair = (low >> (2 * level)) & 3
        rows |= (pair >> 1) << level
        cols |= (pair & 1) << level
    return np.stack([rows, cols], axis=1)


@dataclass(frozen=True)
class OrderingSpec:
    """
    Nested ordering of depth ``depth`` over an ``height x width`` token grid.

    ``permutation[i]`` is the raster index of the token at nested index i.
    """

    height: int
    width: int
    depth: int

    def __post_init__(self) -> None:
        if self.height <= 0 or self.width <= 0:
            raise MergeError(f"Grid extents must be positive, got {self.height}x{self.width}")
        if self.depth < 0:
            raise MergeError(f"Nesting depth must be >= 0, got {self.depth}")
        tile = 2**self.depth
        if self.height % tile or self.width % tile:
            raise MergeError(
                f"A {self.height}x{self.width} grid cannot nest {self.depth} levels deep"
            )

    @property
    def tokens(self) -> int:
        return self.height * self.width

    @property
    def top_grid(self) -> tuple[int, int]:
        tile = 2**self.depth
        return self.height // tile, self.width // tile

    @property
    def ordering(self) -> Ordering:
        return Ordering.nested(self.depth)

    @cached_property
    def permutation(self) -> np.ndarray:
        tile = 2**self.depth
        _, top_w = self.top_grid
        nested = np.arange(self.tokens)
        top, low = np.divmod(nested, 4**self.depth)
        offsets = _morton_offsets(self.depth)[low]
        rows = (top // top_w) * tile + offsets[:, 0]
        cols = (top % top_w) * tile + offsets[:, 1]
        perm = rows * self.width + cols
        perm.setflags(write=False)
        return perm

    @cached_property
    def inverse_permutation(self) -> np.ndarray:
        inverse = np.argsort(self.permutation)
        inverse.setflags(write=False)
        return inverse

    def coords(self) -> np.ndarray:
        """``(row, col)`` grid coordinate of each token in nested order."""
        perm = self.permutation
        return np.stack([perm // self.width, perm % self.width], axis=1)

    def shallower(self) -> "OrderingSpec":
        return OrderingSpec(self.height, self.width, self.depth - 1)

    def to_fixture(self, path: str | Path) -> None:
        write_fixture(path, self.permutation.astype(np.int64))


def _check_tokens(x: Tensor, spec: OrderingSpec) -> None:
    if x.ndim != 3:
        raise MergeError(f"Token tensors must be [B, n, C], got {x.shape}")
    if x.shape[1] != spec.tokens:
        raise MergeError(
            f"Token axis has {x.shape[1]} entries, a {spec.height}x{spec.width} grid has "
            f"{spec.tokens}"
        )


def _fold_step(x: Tensor, spec: OrderingSpec) -> Tensor:
    """nested(d) -> nested(d - 1) on the same grid."""
    bsz, n, c = x.shape
    top_h, top_w = spec.top_grid
    rest = 4 ** (spec.depth - 1)
    out = reshape_permute(x, (bsz, top_h, top_w, 2, 2, rest, c), (0, 1, 3, 2, 4, 5, 6))
    return reshape(out, (bsz, n, c))


def _unfold_step(x: Tensor, spec: OrderingSpec) -> Tensor:
    """nested(d - 1) -> nested(d) on the same grid."""
    bsz, n, c = x.shape
    top_h, top_w = spec.top_grid
    rest = 4 ** (spec.depth - 1)
    out = reshape_permute(x, (bsz, top_h, 2, top_w, 2, rest, c), (0, 1, 3, 2, 4, 5, 6))
    return reshape(out, (bsz, n, c))


def dcm(x: Tensor, spec: OrderingSpec) -> Tensor:
    """
    Reorder ``[B, n, C]`` tokens from nested order to raster order.

    Applies one reshape-permute per nesting level.

    Raises:
        MergeError: If the token count does not match the grid
    """
    _check_tokens(x, spec)
    step = spec
    while step.depth > 0:
        x = _fold_step(x, step)
        step = step.shallower()
    return x


def inverse_dcm(x: Tensor, spec: OrderingSpec) -> Tensor:
    """Reorder ``[B, n, C]`` raster tokens into ``spec``'s nested order."""
    _check_tokens(x, spec)
    for depth in range(1, spec.depth + 1):
        x = _unfold_step(x, OrderingSpec(spec.height, spec.width, depth))
    return x


def nest_features(features: Tensor, spec: OrderingSpec) -> Tensor:
    """``[B, H, W, C]`` raster map -> ``[B, HW, C]`` tokens in nested order."""
    if features.ndim != 4 or features.shape[1:3] != (spec.height, spec.width):
        raise MergeError(
            f"Expected a [B, {spec.height}, {spec.width}, C] map, got {features.shape}"
        )
    bsz, h, w, c = features.shape
    return inverse_dcm(reshape(features, (bsz, h * w, c)), spec)


def dcm_attention(am: AttentionMap, spec: OrderingSpec) -> AttentionMap:
    """
    Permute both token axes of a nested map into raster order.

    ``out[p, q] = am[π⁻¹(p), π⁻¹(q)]``.

    Raises:
        MergeError: If the map does not cover the grid or its ordering tag
            disagrees with ``spec``
    """
    if am.tokens != spec.tokens:
        raise MergeError(f"Map covers {am.tokens} tokens, grid has {spec.tokens}")
    accepted = {spec.ordering, Ordering.raster()} if spec.depth == 0 else {spec.ordering}
    if am.ordering not in accepted:
        raise MergeError(f"Map is ordered {am.ordering}, spec expects {spec.ordering}")

    if spec.depth == 0:
        values = am.values
    else:
        inverse = spec.inverse_permutation
        values = take(take(am.values, inverse, axis=-2), inverse, axis=-1)
    return AttentionMap(values, Ordering.raster(), am.scale_id, am.source_scales)
