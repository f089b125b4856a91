"""End-to-end segmentation network."""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional

import numpy as np

from attnmerge.config import ModelConfig
from attnmerge.registry import RegistrationError
from attnmerge.tensor import Module, Tensor, TensorError, cross_entropy, resolve_dtype

from .base import DecoderState, FeaturePyramid, ModelError
from .decoder import DecoderLevel, DeepestDecoder, FinalFusion
from .head import MLPHead
from .registry import get_decoder_registry, get_encoder_registry

logger = logging.getLogger(__name__)


@dataclass
class ForwardTrace:
    """Intermediate results of one forward pass."""

    pyramid: FeaturePyramid
    states: List[DecoderState]
    fused: Tensor
    logits: Tensor


class Network(Module):
    """
    Encoder, deepest global attention, two middle decoder levels, H/4 fusion
    and the MLP head, built from a :class:`ModelConfig`.

    Parameters are addressed by dotted paths such as
    ``level1.gmsa.qkv.q.weight``.
    """

    def __init__(self, config: ModelConfig, rng: Optional[np.random.Generator] = None) -> None:
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.config = config
        self.dtype = resolve_dtype(config.dtype)
        dtype = config.dtype

        if config.input_h % 32 or config.input_w % 32:
            raise ModelError(
                f"Input extents must be divisible by 32, got {config.input_h}x{config.input_w}"
            )
        if config.classes < 2:
            raise ModelError(f"classes must be at least 2, got {config.classes}")

        enc = tuple(config.encoder_channels)
        dec = tuple(config.decoder_channels)
        grids = [(config.input_h // s, config.input_w // s) for s in (4, 8, 16, 32)]

        try:
            encoder_cls = get_encoder_registry().get(config.encoder)
            level_cls = get_decoder_registry().get(config.decoder_attention)
        except RegistrationError as e:
            raise ModelError(str(e)) from e

        self.add_child("encoder", encoder_cls(config.in_channels, enc, rng, dtype))
        self.add_child("deepest", DeepestDecoder(enc[3], config.heads.deepest, grids[3], rng, dtype))

        trunk = enc[3]
        for level, (skip_channels, width, grid) in enumerate(
            zip((enc[2], enc[1]), dec, (grids[2], grids[1])), start=1
        ):
            self.add_child(
                f"level{level}",
                level_cls(
                    trunk,
                    skip_channels,
                    width,
                    config.heads.granular,
                    grid,
                    level,
                    rng,
                    dtype,
                    mask_granularity=config.mask_granularity,
                    renormalize=config.renormalize,
                ),
            )
            trunk = width

        self.add_child("final", FinalFusion(trunk, enc[0], config.final_channels, rng, dtype))
        self.add_child(
            "head",
            MLPHead(
                config.final_channels,
                config.head_hidden,
                config.classes,
                rng,
                dtype,
                zero_init=config.head_zero_init,
            ),
        )
        self.rename_parameters()
        logger.debug(
            "Built %s network with %d parameters", config.decoder_attention, self.parameter_count()
        )

    @property
    def levels(self) -> List[DecoderLevel]:
        return [self.level1, self.level2]

    def parameters(self) -> Dict[str, Tensor]:
        return self.named_parameters()

    def _check_image(self, image: Tensor) -> Tensor:
        cfg = self.config
        expected = (cfg.input_h, cfg.input_w, cfg.in_channels)
        if image.ndim != 4 or image.shape[1:] != expected:
            raise ModelError(f"Expected a [B, {', '.join(map(str, expected))}] image, got {image.shape}")
        if image.dtype != self.dtype:
            image = image.astype(self.dtype)
        return image

    def encode(self, image: Tensor) -> FeaturePyramid:
        return self.encoder(self._check_image(image))

    def decoder_deepest(self, feat4: Tensor) -> DecoderState:
        return self.deepest(feat4)

    def decoder_level(self, state: DecoderState, skip: Tensor, index: int) -> DecoderState:
        """Run middle level ``index`` (1 at H/16, 2 at H/8)."""
        if index not in (1, 2):
            raise ModelError(f"Middle decoder levels are 1 and 2, got {index}")
        return self.levels[index - 1](state, skip)

    def decoder_final(self, state: DecoderState, skip1: Tensor) -> Tensor:
        return self.final(state, skip1)

    def mlp_head(self, features: Tensor) -> Tensor:
        return self.head(features)

    def trace(self, image: Tensor, params: Optional[Mapping[str, Tensor]] = None) -> ForwardTrace:
        """
        Forward pass keeping every intermediate.

        Args:
            image: ``[B, H, W, C_in]`` input
            params: Parameter values to load first (dotted paths)
        """
        if params is not None:
            self.load_parameters(params)

        pyramid = self.encode(image)
        states = [self.decoder_deepest(pyramid[3])]
        states.append(self.decoder_level(states[-1], pyramid[2], 1))
        states.append(self.decoder_level(states[-1], pyramid[1], 2))
        fused = self.decoder_final(states[-1], pyramid[0])
        return ForwardTrace(pyramid, states, fused, self.mlp_head(fused))

    def forward(self, image: Tensor, params: Optional[Mapping[str, Tensor]] = None) -> Tensor:
        """``[B, H, W, classes]`` logits."""
        return self.trace(image, params).logits

    __call__ = forward

    def loss(
        self,
        image: Tensor,
        labels: np.ndarray,
        params: Optional[Mapping[str, Tensor]] = None,
    ) -> Tensor:
        """
        Mean pixel cross-entropy.

        Raises:
            ModelError: If a label lies outside ``[0, classes)``
        """
        logits = self.forward(image, params)
        try:
            return cross_entropy(logits, labels)
        except TensorError as e:
            raise ModelError(str(e)) from e


def build_network(config: ModelConfig, seed: int = 0) -> Network:
    """Network initialised from ``numpy.random.default_rng(seed)``."""
    return Network(config, np.random.default_rng(seed))


def parameter_count(network: Network) -> int:
    return network.parameter_count()


def describe(network: Network) -> Dict[str, Any]:
    """Parameter counts per top-level component."""
    return {
        name: child.parameter_count() for name, child in network._children.items()
    } | {"total": network.parameter_count()}
