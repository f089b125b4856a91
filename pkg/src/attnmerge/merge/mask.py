"""Fixed mask templates selecting current-scale entries of a merged map."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from attnmerge.tensor import Tensor, write_fixture

from .base import MergeError

GRANULARITIES = ("element", "block")
BLOCK = 4


@dataclass(frozen=True)
class MaskTemplate:
    """
    Binary ``[n, n]`` template E.

    ``element`` granularity is the identity matrix. ``block`` granularity has
    all-ones 4x4 blocks on the diagonal, one per 2x2 subregion.
    """

    granularity: str
    size: int
    matrix: np.ndarray = field(repr=False, compare=False)

    def tensor(self, dtype: Any = "f64") -> Tensor:
        return Tensor(self.matrix, dtype=dtype)

    def complement(self, dtype: Any = "f64") -> Tensor:
        """``1 - E``."""
        return Tensor(1.0 - self.matrix, dtype=dtype)

    def to_fixture(self, path: str | Path) -> None:
        write_fixture(path, self.matrix.astype(np.int64))


def build_mask(n: int, granularity: str = "block") -> MaskTemplate:
    """
    Realize the mask template for ``n`` tokens.

    Raises:
        MergeError: On an unknown granularity, a non-positive size, or a block
            mask whose size is not a multiple of 4
    """
    if granularity not in GRANULARITIES:
        raise MergeError(
            f"Unknown mask granularity {granularity!r}; expected one of {', '.join(GRANULARITIES)}"
        )
    if n <= 0:
        raise MergeError(f"Mask size must be positive, got {n}")

    if granularity == "element":
        matrix = np.eye(n)
    else:
        if n % BLOCK != 0:
            raise MergeError(f"Block mask needs a size divisible by {BLOCK}, got {n}")
        matrix = np.kron(np.eye(n // BLOCK), np.ones((BLOCK, BLOCK)))

    matrix.setflags(write=False)
    return MaskTemplate(granularity, n, matrix)
