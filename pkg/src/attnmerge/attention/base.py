"""Attention map types shared by the attention, merge and model packages."""

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from attnmerge.tensor import Tensor


class AttentionError(Exception):
    """Raised on invalid attention inputs or map shapes."""

    pass


@dataclass(frozen=True)
class Ordering:
    """
    Token-ordering tag of an attention map or token sequence.

    ``raster`` is row-major over the token grid. ``nested(depth)`` is the
    recursive quadtree order anchored ``depth`` levels up: a raster walk over
    the coarse grid in which each coarse token expands into its four children
    (row-major inside the 2x2), recursively. ``nested(0)`` is the raster order
    of the anchoring grid itself.
    """

    kind: str
    depth: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("raster", "nested"):
            raise AttentionError(f"Unknown ordering kind {self.kind!r}")
        if self.depth < 0:
            raise AttentionError(f"Ordering depth must be >= 0, got {self.depth}")
        if self.kind == "raster" and self.depth != 0:
            raise AttentionError("Raster ordering carries no nesting depth")

    @classmethod
    def raster(cls) -> "Ordering":
        return cls("raster", 0)

    @classmethod
    def nested(cls, depth: int) -> "Ordering":
        return cls("nested", depth)

    @property
    def is_nested(self) -> bool:
        return self.kind == "nested"

    def __str__(self) -> str:
        return "raster" if self.kind == "raster" else f"nested({self.depth})"


@dataclass
class AttentionInputs:
    """Per-head queries, keys and values shaped ``[..., heads, n, d_k]``."""

    q: Tensor
    k: Tensor
    v: Tensor

    def __post_init__(self) -> None:
        if not (self.q.shape == self.k.shape == self.v.shape):
            raise AttentionError(
                f"Q, K, V shapes differ: {self.q.shape}, {self.k.shape}, {self.v.shape}"
            )
        if self.q.ndim < 3:
            raise AttentionError(f"Q/K/V must be [..., heads, n, d_k], got {self.q.shape}")

    @property
    def heads(self) -> int:
        return self.q.shape[-3]

    @property
    def tokens(self) -> int:
        return self.q.shape[-2]

    @property
    def d_k(self) -> int:
        return self.q.shape[-1]


@dataclass
class AttentionMap:
    """
    Row-stochastic per-head ``[..., heads, n, n]`` map plus its token ordering.

    ``source_scales`` lists the decoder levels that contributed; a map
    produced directly by attention has only its own ``scale_id``.
    """

    values: Tensor
    ordering: Ordering = field(default_factory=Ordering.raster)
    scale_id: int = 0
    source_scales: Tuple[int, ...] = ()

    def __post_init__(self) -> None:
        shape = self.values.shape
        if len(shape) < 3 or shape[-1] != shape[-2]:
            raise AttentionError(f"Attention map must be [..., heads, n, n], got {shape}")
        if not self.source_scales:
            self.source_scales = (self.scale_id,)

    @property
    def heads(self) -> int:
        return self.values.shape[-3]

    @property
    def tokens(self) -> int:
        return self.values.shape[-1]

    def numpy(self) -> np.ndarray:
        return self.values.numpy()

    def row_sums(self) -> np.ndarray:
        return self.values.numpy().sum(axis=-1)
