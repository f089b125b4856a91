"""Dense tensor type and its errors."""

from typing import Any, Optional, Sequence, Tuple

import numpy as np

DTYPES = {"f32": np.float32, "f64": np.float64}


class TensorError(Exception):
    """Raised on shape, dtype or value problems in tensor primitives."""

    pass


class TapeError(Exception):
    """Raised when the gradient tape is misused."""

    pass


def resolve_dtype(dtype: Any) -> np.dtype:
    """Map ``"f32"``/``"f64"`` (or a numpy float dtype) to a numpy dtype."""
    if isinstance(dtype, str):
        if dtype not in DTYPES:
            raise TensorError(
                f"Unsupported dtype {dtype!r}; expected one of {', '.join(DTYPES)}"
            )
        return np.dtype(DTYPES[dtype])

    resolved = np.dtype(dtype)
    if resolved not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise TensorError(f"Unsupported dtype {resolved}; tensors hold f32 or f64")
    return resolved


def dtype_name(dtype: np.dtype) -> str:
    """Inverse of :func:`resolve_dtype`."""
    return "f32" if np.dtype(dtype) == np.float32 else "f64"


class Tensor:
    """
    Immutable dense array with an explicit shape, stored row-major.

    The numpy buffer is copied on construction and marked read-only, so a
    tensor can be shared freely between threads. Tensors compare and hash by
    identity; gradients are keyed on that identity.

    Attributes:
        requires_grad: Whether gradients flow to this tensor
        name: Optional parameter name
    """

    __slots__ = ("_data", "requires_grad", "name", "_origin", "__weakref__")

    def __init__(
        self,
        data: Any,
        dtype: Any = None,
        requires_grad: bool = False,
        name: Optional[str] = None,
    ) -> None:
        if isinstance(data, Tensor):
            data = data._data

        array = np.asarray(data)
        if dtype is not None:
            target = resolve_dtype(dtype)
        elif array.dtype in (np.float32, np.float64):
            target = array.dtype
        else:
            target = np.dtype(np.float64)

        array = np.array(array, dtype=target, order="C", copy=True)
        if any(extent <= 0 for extent in array.shape):
            raise TensorError(f"Tensor extents must be positive, got shape {array.shape}")

        array.setflags(write=False)
        self._data = array
        self.requires_grad = requires_grad
        self.name = name
        # (tape, generation) of the operation that produced this tensor
        self._origin: Optional[Tuple[Any, int]] = None

    @classmethod
    def adopt(cls, array: np.ndarray, requires_grad: bool = False) -> "Tensor":
        """Wrap a freshly computed array without copying it."""
        if array.dtype not in (np.float32, np.float64):
            array = array.astype(np.float64)
        if any(extent <= 0 for extent in array.shape):
            raise TensorError(f"Tensor extents must be positive, got shape {array.shape}")

        array = np.ascontiguousarray(array)
        array.setflags(write=False)
        tensor = cls.__new__(cls)
        tensor._data = array
        tensor.requires_grad = requires_grad
        tensor.name = None
        tensor._origin = None
        return tensor

    @classmethod
    def zeros(cls, shape: Sequence[int], dtype: Any = "f64", **kwargs: Any) -> "Tensor":
        return cls(np.zeros(tuple(shape), dtype=resolve_dtype(dtype)), **kwargs)

    @classmethod
    def ones(cls, shape: Sequence[int], dtype: Any = "f64", **kwargs: Any) -> "Tensor":
        return cls(np.ones(tuple(shape), dtype=resolve_dtype(dtype)), **kwargs)

    @classmethod
    def identity(cls, n: int, dtype: Any = "f64", **kwargs: Any) -> "Tensor":
        return cls(np.eye(n, dtype=resolve_dtype(dtype)), **kwargs)

    @classmethod
    def randn(
        cls,
        shape: Sequence[int],
        rng: np.random.Generator,
        dtype: Any = "f64",
        scale: float = 1.0,
        **kwargs: Any,
    ) -> "Tensor":
        values = rng.standard_normal(tuple(shape)) * scale
        return cls(values.astype(resolve_dtype(dtype)), **kwargs)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self._data.shape

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return int(self._data.size)

    @property
    def dtype(self) -> np.dtype:
        return self._data.dtype

    @property
    def strides(self) -> Tuple[int, ...]:
        """Row-major element strides derived from the shape."""
        strides = []
        step = 1
        for extent in reversed(self.shape):
            strides.append(step)
            step *= extent
        return tuple(reversed(strides))

    def numpy(self) -> np.ndarray:
        """Read-only view of the underlying buffer."""
        return self._data

    def flat(self) -> np.ndarray:
        """Flat row-major buffer (read-only view)."""
        return self._data.reshape(-1)

    def item(self) -> float:
        if self.size != 1:
            raise TensorError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self._data.reshape(-1)[0])

    def astype(self, dtype: Any) -> "Tensor":
        """Detached copy in another dtype."""
        return Tensor(self._data, dtype=dtype, requires_grad=self.requires_grad, name=self.name)

    def detach(self) -> "Tensor":
        return Tensor(self._data, name=self.name)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from .ops import matmul

        return matmul(self, other)

    def __add__(self, other: "Tensor") -> "Tensor":
        from .ops import add

        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        from .ops import sub

        return sub(self, other)

    def __mul__(self, other: Any) -> "Tensor":
        from .ops import mul, scale

        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        from .ops import scale

        return scale(self, -1.0)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={dtype_name(self.dtype)}{label})"
