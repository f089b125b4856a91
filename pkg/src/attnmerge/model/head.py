"""Pixel-wise MLP prediction head."""

from typing import Any

import numpy as np

from attnmerge.tensor import Linear, Module, Tensor, gelu, upsample_nearest

from .base import ModelError

OUTPUT_STRIDE = 4


class MLPHead(Module):
    """
    ``Linear -> GELU -> Linear`` per pixel, then 4x nearest upsampling.

    With ``zero_init`` the output layer starts at zero, so every pixel sees
    uniform class posteriors and the initial cross-entropy is ``ln C``.
    """

    def __init__(
        self,
        in_channels: int,
        hidden: int,
        classes: int,
        rng: np.random.Generator,
        dtype: Any = "f64",
        zero_init: bool = True,
    ) -> None:
        super().__init__()
        if classes < 2:
            raise ModelError(f"The head needs at least 2 classes, got {classes}")
        self.classes = classes
        self.add_child("hidden", Linear(in_channels, hidden, rng, dtype))
        self.add_child("out", Linear(hidden, classes, rng, dtype, zero_init=zero_init))

    def __call__(self, features: Tensor) -> Tensor:
        if features.ndim != 4:
            raise ModelError(f"MLPHead expects [B, H, W, C], got {features.shape}")
        logits = self.out(gelu(self.hidden(features)))
        return upsample_nearest(logits, OUTPUT_STRIDE)
