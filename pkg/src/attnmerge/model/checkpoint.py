"""Checkpoints as a directory of named tensor fixtures.

Layout::

    checkpoint/
      index.yaml            parameter path -> fixture file, shape, dtype
      encoder.stage1.weight.txt
      ...
"""

import logging
from pathlib import Path
from typing import Any, Dict

import yaml

from attnmerge.tensor import FixtureError, Tensor, TensorError, dtype_name, read_fixture, write_fixture

from .base import ModelError
from .network import Network

logger = logging.getLogger(__name__)

INDEX_FILE = "index.yaml"


def save_checkpoint(network: Network, directory: str | Path) -> Path:
    """
    Write every parameter of ``network`` under ``directory``.

    Returns:
        Path of the written index

    Raises:
        ModelError: If a file cannot be written
    """
    directory = Path(directory)
    entries: Dict[str, Dict[str, Any]] = {}

    try:
        directory.mkdir(parents=True, exist_ok=True)
        for path, tensor in network.named_parameters().items():
            filename = f"{path}.txt"
            write_fixture(directory / filename, tensor)
            entries[path] = {
                "file": filename,
                "shape": list(tensor.shape),
                "dtype": dtype_name(tensor.dtype),
            }

        index = directory / INDEX_FILE
        with open(index, "w", encoding="utf-8") as f:
            yaml.safe_dump({"parameters": entries}, f, sort_keys=True)
    except (OSError, FixtureError) as e:
        raise ModelError(f"Failed to save checkpoint to {directory}: {e}") from e

    logger.debug("Saved %d parameters to %s", len(entries), directory)
    return index


def load_checkpoint(network: Network, directory: str | Path) -> None:
    """
    Load parameters written by :func:`save_checkpoint` into ``network``.

    Raises:
        ModelError: If the index is missing or malformed, a parameter is
            absent from either side, or a shape differs
    """
    directory = Path(directory)
    index = directory / INDEX_FILE
    if not index.exists():
        raise ModelError(f"Checkpoint index not found: {index}")

    try:
        with open(index, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ModelError(f"Invalid checkpoint index {index}: {e}") from e

    if not isinstance(data, dict) or not isinstance(data.get("parameters"), dict):
        raise ModelError(f"Checkpoint index {index} has no 'parameters' mapping")

    entries = data["parameters"]
    expected = set(network.named_parameters())
    missing = sorted(expected - set(entries))
    extra = sorted(set(entries) - expected)
    if missing or extra:
        raise ModelError(
            f"Checkpoint does not match the network (missing: {missing or 'none'}, "
            f"unexpected: {extra or 'none'})"
        )

    for path, entry in entries.items():
        try:
            values = read_fixture(directory / entry["file"])
            network.set_parameter(path, Tensor(values, dtype=entry["dtype"]))
        except (KeyError, FixtureError, TensorError) as e:
            raise ModelError(f"Cannot load parameter {path!r}: {e}") from e
