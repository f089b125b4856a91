"""Model-level types: errors, the feature pyramid and the decoder state."""

from dataclasses import dataclass
from typing import Optional, Tuple

from attnmerge.attention import AttentionMap, Ordering
from attnmerge.merge import OrderingSpec
from attnmerge.tensor import Tensor


class ModelError(Exception):
    """Raised on invalid model configuration or mismatched feature maps."""

    pass


@dataclass
class FeaturePyramid:
    """Encoder outputs, shallow to deep, each ``[B, H_i, W_i, C_i]``."""

    stages: Tuple[Tensor, Tensor, Tensor, Tensor]

    def __post_init__(self) -> None:
        if len(self.stages) != 4:
            raise ModelError(f"A feature pyramid has 4 stages, got {len(self.stages)}")
        for shallow, deep in zip(self.stages, self.stages[1:]):
            if shallow.shape[1] != 2 * deep.shape[1] or shallow.shape[2] != 2 * deep.shape[2]:
                raise ModelError(
                    f"Stage extents must halve: {shallow.shape[1:3]} -> {deep.shape[1:3]}"
                )

    def __getitem__(self, index: int) -> Tensor:
        return self.stages[index]

    def sizes(self) -> Tuple[Tuple[int, int], ...]:
        return tuple((s.shape[1], s.shape[2]) for s in self.stages)


@dataclass
class DecoderState:
    """
    Features and attention handed from one decoder level to the next.

    ``features`` are ``[B, n, C]`` tokens ordered by ``spec`` (nested at
    depth ``spec.depth``). ``attention`` is the map carried forward (merged
    for the granular variant); ``values`` and ``attention_output`` are the
    per-head V and ``AM x V`` of the level, kept for inspection.
    """

    features: Tensor
    spec: OrderingSpec
    level: int
    attention: Optional[AttentionMap] = None
    values: Optional[Tensor] = None
    attention_output: Optional[Tensor] = None

    def __post_init__(self) -> None:
        if self.features.ndim != 3 or self.features.shape[1] != self.spec.tokens:
            raise ModelError(
                f"Features {self.features.shape} do not cover a "
                f"{self.spec.height}x{self.spec.width} grid"
            )
        if self.attention is not None and self.attention.tokens != self.spec.tokens:
            raise ModelError(
                f"Attention covers {self.attention.tokens} tokens, features {self.spec.tokens}"
            )

    @property
    def ordering(self) -> Ordering:
        return self.spec.ordering
