"""Portable text fixture format for tensors and label rasters.

Layout::

    dtype f64
    shape 2 3
    values
    0.5
    -1.25
    ...

Floats are written with ``repr`` (shortest round-trip form), so f64 values
read back bit-exactly. ``i64`` fixtures hold integer rasters such as labels.
"""

from pathlib import Path
from typing import Dict

import numpy as np

from .base import Tensor

FIXTURE_DTYPES: Dict[str, type] = {"f32": np.float32, "f64": np.float64, "i64": np.int64}


class FixtureError(Exception):
    """Raised when a fixture cannot be written or parsed."""

    pass


def _dtype_name(array: np.ndarray) -> str:
    if array.dtype == np.float32:
        return "f32"
    if array.dtype == np.float64:
        return "f64"
    if np.issubdtype(array.dtype, np.integer):
        return "i64"
    raise FixtureError(f"Unsupported fixture dtype {array.dtype}")


def dumps_array(array: np.ndarray) -> str:
    """Serialize an array to fixture text."""
    array = np.asarray(array)
    name = _dtype_name(array)
    if name == "i64":
        values = [str(int(v)) for v in array.reshape(-1)]
    else:
        values = [repr(float(v)) for v in array.reshape(-1)]

    lines = [
        f"dtype {name}",
        "shape " + " ".join(str(s) for s in array.shape),
        "values",
        *values,
    ]
    return "\n".join(lines) + "\n"


def loads_array(text: str) -> np.ndarray:
    """
    Parse fixture text.

    Raises:
        FixtureError: On a malformed header, unknown dtype or value-count mismatch
    """
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    if len(lines) < 3 or not lines[0].startswith("dtype ") or not lines[1].startswith("shape"):
        raise FixtureError("Fixture must start with 'dtype', 'shape' and 'values' lines")

    if lines[2] != "values":
        raise FixtureError("Fixture third line must be 'values'")

    name = lines[0].split(maxsplit=1)[1]
    if name not in FIXTURE_DTYPES:
        raise FixtureError(f"Unknown fixture dtype {name!r}")

    try:
        shape = tuple(int(s) for s in lines[1].split()[1:])
        dtype = FIXTURE_DTYPES[name]
        if name == "i64":
            values = np.array([int(v) for v in lines[3:]], dtype=dtype)
        else:
            values = np.array([float(v) for v in lines[3:]], dtype=dtype)
    except ValueError as e:
        raise FixtureError(f"Malformed fixture value: {e}") from e

    expected = int(np.prod(shape)) if shape else 1
    if values.size != expected:
        raise FixtureError(
            f"Fixture shape {shape} needs {expected} values, found {values.size}"
        )

    return values.reshape(shape)


def write_fixture(path: str | Path, data: Tensor | np.ndarray) -> None:
    """Write a tensor or array to ``path``."""
    array = data.numpy() if isinstance(data, Tensor) else np.asarray(data)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps_array(array), encoding="utf-8")
    except OSError as e:
        raise FixtureError(f"Failed to write fixture {path}: {e}") from e


def read_fixture(path: str | Path) -> np.ndarray:
    """Read an array from ``path``."""
    path = Path(path)
    if not path.exists():
        raise FixtureError(f"Fixture not found: {path}")
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise FixtureError(f"Failed to read fixture {path}: {e}") from e
    return loads_array(text)


def read_tensor(path: str | Path) -> Tensor:
    """Read a float fixture as a :class:`Tensor`."""
    array = read_fixture(path)
    if np.issubdtype(array.dtype, np.integer):
        raise FixtureError(f"Fixture {path} holds integers, not a float tensor")
    return Tensor(array)
