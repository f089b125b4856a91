"""Registries for encoders and decoder attention variants."""

from attnmerge.registry import ComponentRegistry

encoder_registry = ComponentRegistry("encoder")
decoder_registry = ComponentRegistry("decoder attention variant")


def get_encoder_registry() -> ComponentRegistry:
    """Get the encoder registry instance."""
    return encoder_registry


def get_decoder_registry() -> ComponentRegistry:
    """Get the decoder attention variant registry instance."""
    return decoder_registry
