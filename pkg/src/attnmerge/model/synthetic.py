"""Synthetic rectangle segmentation task for smoke training."""

from dataclasses import dataclass

import numpy as np

from attnmerge.tensor import Tensor

from .base import ModelError

SYNTHETIC_CLASSES = 3
GRID_CELL = 4


@dataclass
class SyntheticBatch:
    """``image`` is ``[B, H, W, C_in]``; ``labels`` is ``[B, H, W]`` int64."""

    image: Tensor
    labels: np.ndarray

    @property
    def size(self) -> int:
        return self.labels.shape[0]


def rectangle_labels(
    rng: np.random.Generator,
    height: int,
    width: int,
    classes: int = SYNTHETIC_CLASSES,
    rectangles: int = 4,
) -> np.ndarray:
    """
    Background class 0 with axis-aligned rectangles of classes ``1..classes-1``.

    Rectangle corners lie on the 4-pixel grid, so the labels are constant
    over every 4x4 cell the network predicts at H/4.
    """
    if height % GRID_CELL or width % GRID_CELL:
        raise ModelError(f"Raster extents must be multiples of {GRID_CELL}, got {height}x{width}")
    if classes < 2:
        raise ModelError(f"The task needs at least 2 classes, got {classes}")

    rows, cols = height // GRID_CELL, width // GRID_CELL
    labels = np.zeros((height, width), dtype=np.int64)
    for _ in range(rectangles):
        cls = int(rng.integers(1, classes))
        rh = int(rng.integers(1, max(2, rows // 2) + 1))
        rw = int(rng.integers(1, max(2, cols // 2) + 1))
        r0 = int(rng.integers(0, rows - rh + 1))
        c0 = int(rng.integers(0, cols - rw + 1))
        labels[
            r0 * GRID_CELL:(r0 + rh) * GRID_CELL,
            c0 * GRID_CELL:(c0 + rw) * GRID_CELL,
        ] = cls
    return labels


def rectangle_batch(
    rng: np.random.Generator,
    batch: int,
    height: int = 64,
    width: int = 64,
    in_channels: int = 3,
    classes: int = SYNTHETIC_CLASSES,
    noise: float = 0.05,
    dtype: str = "f64",
) -> SyntheticBatch:
    """
    Images whose pixel colour is a per-class palette entry plus Gaussian noise.

    The palette is ``eye(classes, in_channels)``: class c lights channel c.
    """
    labels = np.stack([rectangle_labels(rng, height, width, classes) for _ in range(batch)])
    palette = np.eye(classes, in_channels)
    image = palette[labels] + noise * rng.standard_normal((batch, height, width, in_channels))
    return SyntheticBatch(Tensor(image, dtype=dtype), labels)
