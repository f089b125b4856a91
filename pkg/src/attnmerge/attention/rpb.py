"""Relative position bias tables."""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from attnmerge.tensor import Tensor, gather_bias

from .base import AttentionError


def table_size(window: Tuple[int, int]) -> int:
    """Entries per head for a ``(wh, ww)`` window: ``(2wh-1)(2ww-1)``."""
    wh, ww = window
    return (2 * wh - 1) * (2 * ww - 1)


def raster_coords(height: int, width: int) -> np.ndarray:
    """``[(row, col), ...]`` for a grid walked row-major."""
    rows, cols = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    return np.stack([rows.reshape(-1), cols.reshape(-1)], axis=1)


def relative_position_index(coords: np.ndarray, window: Tuple[int, int]) -> np.ndarray:
    """
    Table index for every token pair.

    For tokens p, q with offsets ``(dr, dc) = coords[p] - coords[q]`` the
    index is ``(dr + wh - 1) * (2ww - 1) + (dc + ww - 1)``.

    Raises:
        AttentionError: If an offset falls outside the window
    """
    wh, ww = window
    coords = np.asarray(coords, dtype=np.int64)
    rel = coords[:, None, :] - coords[None, :, :]
    if np.any(np.abs(rel[..., 0]) > wh - 1) or np.any(np.abs(rel[..., 1]) > ww - 1):
        raise AttentionError(
            f"Token offsets exceed the {wh}x{ww} relative position window"
        )
    return (rel[..., 0] + wh - 1) * (2 * ww - 1) + (rel[..., 1] + ww - 1)


@dataclass
class RPBTable:
    """
    Learned bias per head and relative offset, with the pair->entry index map.

    One table serves every subregion of a granular attention module since the
    offsets inside each 2x2 subregion are identical.
    """

    values: Tensor
    window: Tuple[int, int]
    index: np.ndarray

    def __post_init__(self) -> None:
        expected = table_size(self.window)
        if self.values.ndim != 2 or self.values.shape[1] != expected:
            raise AttentionError(
                f"RPB table for window {self.window} needs shape [heads, {expected}], "
                f"got {self.values.shape}"
            )

    @classmethod
    def for_grid(cls, values: Tensor, height: int, width: int) -> "RPBTable":
        """Table over a whole ``height x width`` grid in raster order."""
        window = (height, width)
        return cls(values, window, relative_position_index(raster_coords(height, width), window))

    @classmethod
    def for_coords(cls, values: Tensor, window: Tuple[int, int], coords: np.ndarray) -> "RPBTable":
        """Table whose tokens sit at explicit grid coordinates (any ordering)."""
        return cls(values, window, relative_position_index(coords, window))

    @classmethod
    def granular(cls, values: Tensor) -> "RPBTable":
        """The 9-entry table of a 2x2 subregion."""
        return cls.for_grid(values, 2, 2)

    @property
    def heads(self) -> int:
        return self.values.shape[0]

    @property
    def tokens(self) -> int:
        return self.index.shape[0]

    def bias(self) -> Tensor:
        """``[heads, n, n]`` additive logits."""
        return gather_bias(self.values, self.index)
