"""Dense tensors, differentiable primitives and the gradient tape."""

from .base import DTYPES, TapeError, Tensor, TensorError, dtype_name, resolve_dtype
from .fixtures import (
    FixtureError,
    dumps_array,
    loads_array,
    read_fixture,
    read_tensor,
    write_fixture,
)
from .gradcheck import (
    GradCheckError,
    GradCheckReport,
    ParamCheck,
    check_gradients,
    finite_difference_grad,
    relative_error,
)
from .ops import (
    add,
    block_diag,
    concat,
    conv2d,
    cross_entropy,
    gather_bias,
    gelu,
    group_mean,
    kron_expand,
    matmul,
    mean_all,
    mul,
    normalize_rows,
    repeat_tokens,
    reshape,
    reshape_permute,
    scale,
    softmax_rows,
    sub,
    sum_all,
    swap_last,
    take,
    upsample_nearest,
)
from .module import Conv2d, Linear, Module, uniform_init
from .tape import GradTape, Gradients, TapeEntry, active_tape, backward

__all__ = [
    "DTYPES",
    "Tensor",
    "TensorError",
    "TapeError",
    "dtype_name",
    "resolve_dtype",
    "Module",
    "Linear",
    "Conv2d",
    "uniform_init",
    "GradTape",
    "Gradients",
    "TapeEntry",
    "active_tape",
    "backward",
    "FixtureError",
    "dumps_array",
    "loads_array",
    "read_fixture",
    "read_tensor",
    "write_fixture",
    "GradCheckError",
    "GradCheckReport",
    "ParamCheck",
    "check_gradients",
    "finite_difference_grad",
    "relative_error",
    "add",
    "block_diag",
    "concat",
    "conv2d",
    "cross_entropy",
    "gather_bias",
    "gelu",
    "group_mean",
    "kron_expand",
    "matmul",
    "mean_all",
    "mul",
    "normalize_rows",
    "repeat_tokens",
    "reshape",
    "reshape_permute",
    "scale",
    "softmax_rows",
    "sub",
    "sum_all",
    "swap_last",
    "take",
    "upsample_nearest",
]
