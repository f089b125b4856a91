"""Convolutional encoders producing the four-stage feature pyramid."""

from abc import ABC, abstractmethod
from typing import Any, Sequence

import numpy as np

from attnmerge.tensor import Conv2d, Module, Tensor, gelu

from .base import FeaturePyramid, ModelError
from .registry import encoder_registry

STAGE_STRIDES = (4, 2, 2, 2)


class Encoder(Module, ABC):
    """An image ``[B, H, W, C_in]`` to a :class:`FeaturePyramid`."""

    @abstractmethod
    def __call__(self, image: Tensor) -> FeaturePyramid:
        pass


@encoder_registry.register_decorator("toy_conv")
class ToyConvEncoder(Encoder):
    """
    Four stages of strided 3x3 convolution followed by GELU.

    Strides (4, 2, 2, 2) give stage sizes H/4, H/8, H/16 and H/32.
    """

    def __init__(
        self,
        in_channels: int,
        channels: Sequence[int],
        rng: np.random.Generator,
        dtype: Any = "f64",
    ) -> None:
        super().__init__()
        if len(channels) != len(STAGE_STRIDES):
            raise ModelError(f"ToyConvEncoder needs 4 stage widths, got {len(channels)}")

        self.channels = tuple(channels)
        widths = (in_channels, *channels)
        for i, stride in enumerate(STAGE_STRIDES):
            self.add_child(
                f"stage{i + 1}",
                Conv2d(widths[i], widths[i + 1], rng, dtype, kernel=3, stride=stride, padding=1),
            )

    def __call__(self, image: Tensor) -> FeaturePyramid:
        if image.ndim != 4:
            raise ModelError(f"Encoder expects [B, H, W, C], got {image.shape}")
        _, h, w, _ = image.shape
        if h % 32 or w % 32:
            raise ModelError(f"Input extents must be divisible by 32, got {h}x{w}")

        stages = []
        x = image
        for i in range(len(STAGE_STRIDES)):
            x = gelu(getattr(self, f"stage{i + 1}")(x))
            stages.append(x)
        return FeaturePyramid(tuple(stages))
