"""Parameter-holding building blocks."""

import math
from typing import Any, Dict, Iterator, Optional, Tuple

import numpy as np

from .base import Tensor, TensorError, resolve_dtype
from .ops import add, conv2d, matmul


def uniform_init(
    shape: Tuple[int, ...], fan_in: int, rng: np.random.Generator, dtype: Any
) -> np.ndarray:
    """Uniform values in ``±1/sqrt(fan_in)``."""
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(resolve_dtype(dtype))


class Module:
    """
    Container of named parameters and child modules.

    Parameters are immutable tensors; an optimizer update replaces them via
    :meth:`set_parameter`. Attribute access falls through to parameters and
    children, so ``self.weight`` reads ``self._params["weight"]``.
    """

    def __init__(self) -> None:
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})

    def __getattr__(self, name: str) -> Any:
        params = self.__dict__.get("_params", {})
        if name in params:
            return params[name]
        children = self.__dict__.get("_children", {})
        if name in children:
            return children[name]
        raise AttributeError(f"{type(self).__name__} has no attribute {name!r}")

    def add_parameter(self, name: str, values: np.ndarray) -> Tensor:
        tensor = Tensor(values, requires_grad=True, name=name)
        self._params[name] = tensor
        return tensor

    def add_child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Dict[str, Tensor]:
        """All parameters keyed by dotted path, children after own params."""
        named: Dict[str, Tensor] = {}
        for name, tensor in self._params.items():
            named[f"{prefix}{name}"] = tensor
        for child_name, child in self._children.items():
            named.update(child.named_parameters(f"{prefix}{child_name}."))
        return named

    def modules(self) -> Iterator["Module"]:
        yield self
        for child in self._children.values():
            yield from child.modules()

    def set_parameter(self, path: str, tensor: Tensor) -> None:
        """
        Replace the parameter at dotted ``path``.

        Raises:
            TensorError: On an unknown path or a shape change
        """
        owner: Module = self
        *parents, leaf = path.split(".")
        for part in parents:
            if part not in owner._children:
                raise TensorError(f"Unknown module path {path!r}")
            owner = owner._children[part]

        if leaf not in owner._params:
            raise TensorError(f"Unknown parameter {path!r}")

        current = owner._params[leaf]
        if tensor.shape != current.shape:
            raise TensorError(
                f"Parameter {path!r} has shape {current.shape}, got {tensor.shape}"
            )

        if not tensor.requires_grad or tensor.name != path:
            tensor = Tensor(tensor, dtype=current.dtype, requires_grad=True, name=path)
        owner._params[leaf] = tensor

    def load_parameters(self, mapping: Dict[str, Tensor]) -> None:
        for path, tensor in mapping.items():
            self.set_parameter(path, tensor)

    def parameter_count(self) -> int:
        return sum(t.size for t in self.named_parameters().values())

    def rename_parameters(self, prefix: str = "") -> None:
        """Give every parameter tensor its full dotted path as ``name``."""
        for path, tensor in self.named_parameters(prefix).items():
            tensor.name = path


class Linear(Module):
    """Affine map over the last axis: ``x @ W (+ b)``."""

    def __init__(
        self,
        in_features: int,
        out_features: int,
        rng: np.random.Generator,
        dtype: Any = "f64",
        bias: bool = True,
        zero_init: bool = False,
    ) -> None:
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features

        shape = (in_features, out_features)
        if zero_init:
            weight = np.zeros(shape, dtype=resolve_dtype(dtype))
        else:
            weight = uniform_init(shape, in_features, rng, dtype)
        self.add_parameter("weight", weight)
        if bias:
            self.add_parameter("bias", np.zeros(out_features, dtype=resolve_dtype(dtype)))

    @property
    def has_bias(self) -> bool:
        return "bias" in self._params

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise TensorError(
                f"Linear expects last extent {self.in_features}, got shape {x.shape}"
            )
        out = matmul(x, self.weight)
        if self.has_bias:
            out = add(out, self.bias)
        return out


class Conv2d(Module):
    """3x3 (or other square) NHWC convolution with bias."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        rng: np.random.Generator,
        dtype: Any = "f64",
        kernel: int = 3,
        stride: int = 1,
        padding: Optional[int] = None,
    ) -> None:
        super().__init__()
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        fan_in = kernel * kernel * in_channels
        self.add_parameter(
            "weight", uniform_init((kernel, kernel, in_channels, out_channels), fan_in, rng, dtype)
        )
        self.add_parameter("bias", np.zeros(out_channels, dtype=resolve_dtype(dtype)))

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)
