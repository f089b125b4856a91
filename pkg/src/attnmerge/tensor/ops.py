"""Differentiable primitives.

Every function takes and returns :class:`Tensor` objects. When a tape is
active and any input requires a gradient, the primitive records its
vector-Jacobian product on the tape. Matmul and convolution report their
multiply-accumulates to :mod:`attnmerge.analysis.macs`.

Only leading batch axes broadcast: a right operand may match a trailing
suffix of the left operand's shape, nothing else.
"""

import math
from typing import Optional, Sequence, Tuple

import numpy as np

from attnmerge.analysis.macs import record_macs

from .base import Tensor, TensorError
from .tape import BackwardFn, active_tape

_GELU_C = math.sqrt(2.0 / math.pi)


def _emit(
    op: str, array: np.ndarray, inputs: Tuple[Tensor, ...], backward_fn: BackwardFn
) -> Tensor:
    requires_grad = any(t.requires_grad for t in inputs)
    out = Tensor.adopt(array, requires_grad=requires_grad)

    tape = active_tape()
    if tape is not None and requires_grad:
        tape.record(op, inputs, out, backward_fn)
    return out


def _same_dtype(op: str, *tensors: Tensor) -> None:
    dtypes = {t.dtype for t in tensors}
    if len(dtypes) > 1:
        raise TensorError(f"{op}: mixed dtypes {sorted(str(d) for d in dtypes)}")


def _check_suffix(op: str, a: Tensor, b: Tensor) -> int:
    """Return the number of leading axes ``b`` broadcasts over."""
    if b.ndim > a.ndim or a.shape[a.ndim - b.ndim:] != b.shape:
        raise TensorError(
            f"{op}: shape {b.shape} must equal {a.shape} or a trailing suffix of it"
        )
    return a.ndim - b.ndim


def _reduce_leading(grad: np.ndarray, leading: int) -> np.ndarray:
    if leading == 0:
        return grad
    return grad.sum(axis=tuple(range(leading)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product over the last two axes.

    ``a`` is ``[..., m, k]``; ``b`` is ``[k, n]`` (shared across ``a``'s
    leading axes) or ``[..., k, n]`` with the same leading axes as ``a``.

    Raises:
        TensorError: If inner extents or leading axes disagree
    """
    _same_dtype("matmul", a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise TensorError(f"matmul needs at least 2-D operands, got {a.shape} and {b.shape}")

    if a.shape[-1] != b.shape[-2]:
        raise TensorError(f"matmul shape mismatch: {a.shape} x {b.shape}")

    shared_rhs = b.ndim == 2
    if not shared_rhs and a.shape[:-2] != b.shape[:-2]:
        raise TensorError(f"matmul leading axes differ: {a.shape} x {b.shape}")

    x, y = a.numpy(), b.numpy()
    m_rows = int(np.prod(a.shape[:-1]))
    k, n = b.shape[-2], b.shape[-1]
    record_macs("matmul", m_rows * k * n)

    def backward_fn(g: np.ndarray):
        ga = g @ np.swapaxes(y, -1, -2) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            if shared_rhs:
                gb = x.reshape(-1, k).T @ g.reshape(-1, n)
            else:
                gb = np.swapaxes(x, -1, -2) @ g
        return ga, gb

    return _emit("matmul", x @ y, (a, b), backward_fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may broadcast over ``a``'s leading axes."""
    _same_dtype("add", a, b)
    leading = _check_suffix("add", a, b)

    def backward_fn(g: np.ndarray):
        return g, _reduce_leading(g, leading)

    return _emit("add", a.numpy() + b.numpy(), (a, b), backward_fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise difference of equally shaped tensors."""
    _same_dtype("sub", a, b)
    if a.shape != b.shape:
        raise TensorError(f"sub shape mismatch: {a.shape} vs {b.shape}")

    def backward_fn(g: np.ndarray):
        return g, -g

    return _emit("sub", a.numpy() - b.numpy(), (a, b), backward_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product; ``b`` may broadcast over ``a``'s leading axes."""
    _same_dtype("mul", a, b)
    leading = _check_suffix("mul", a, b)
    x, y = a.numpy(), b.numpy()

    def backward_fn(g: np.ndarray):
        ga = g * y if a.requires_grad else None
        gb = _reduce_leading(g * x, leading) if b.requires_grad else None
        return ga, gb

    return _emit("mul", x * y, (a, b), backward_fn)


def scale(a: Tensor, factor: float) -> Tensor:
    """Multiply every element by a constant."""
    x = a.numpy()
    c = x.dtype.type(factor)

    def backward_fn(g: np.ndarray):
        return (g * c,)

    return _emit("scale", x * c, (a,), backward_fn)


def sum_all(a: Tensor) -> Tensor:
    """Sum of all elements as a scalar tensor."""
    x = a.numpy()

    def backward_fn(g: np.ndarray):
        return (np.broadcast_to(g, x.shape).astype(x.dtype),)

    return _emit("sum", np.asarray(x.sum(), dtype=x.dtype), (a,), backward_fn)


def mean_all(a: Tensor) -> Tensor:
    """Mean of all elements as a scalar tensor."""
    return scale(sum_all(a), 1.0 / a.size)


def gelu(a: Tensor) -> Tensor:
    """Tanh-form GELU; smooth everywhere so finite differences stay accurate."""
    x = a.numpy()
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)

    def backward_fn(g: np.ndarray):
        d_inner = _GELU_C * (1.0 + 3.0 * 0.044715 * x**2)
        local = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * d_inner
        return (g * local,)

    return _emit("gelu", 0.5 * x * (1.0 + t), (a,), backward_fn)


def softmax_rows(logits: Tensor) -> Tensor:
    """
    Softmax over the last axis, stabilised by subtracting each row's maximum.

    Raises:
        TensorError: If any logit is NaN or infinite
    """
    x = logits.numpy()
    if not np.all(np.isfinite(x)):
        raise TensorError("softmax_rows: non-finite input")

    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward_fn(g: np.ndarray):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _emit("softmax_rows", y, (logits,), backward_fn)


def normalize_rows(a: Tensor, min_sum: float = 1e-12) -> Tensor:
    """
    Divide each row (last axis) by its sum.

    Raises:
        TensorError: If a row sums to ``min_sum`` or less
    """
    x = a.numpy()
    s = x.sum(axis=-1, keepdims=True)
    if np.any(s <= min_sum):
        bad = np.argwhere(s[..., 0] <= min_sum)[0]
        raise TensorError(f"normalize_rows: row {tuple(int(i) for i in bad)} sums to <= {min_sum}")

    def backward_fn(g: np.ndarray):
        return (g / s - (g * x).sum(axis=-1, keepdims=True) / (s * s),)

    return _emit("normalize_rows", x / s, (a,), backward_fn)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    """Row-major reshape."""
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != a.size:
        raise TensorError(f"reshape: cannot view {a.shape} as {shape}")
    original = a.shape

    def backward_fn(g: np.ndarray):
        return (g.reshape(original),)

    return _emit("reshape", a.numpy().reshape(shape), (a,), backward_fn)


def reshape_permute(x: Tensor, new_shape: Sequence[int], axis_order: Sequence[int]) -> Tensor:
    """
    Row-major reshape to ``new_shape`` followed by an axis transposition.

    The result is materialised in row-major order of the permuted axes.

    Raises:
        TensorError: On an extent-product mismatch or if ``axis_order`` is not
            a permutation of the reshaped axes
    """
    new_shape = tuple(int(s) for s in new_shape)
    axis_order = tuple(int(i) for i in axis_order)

    if int(np.prod(new_shape)) != x.size:
        raise TensorError(
            f"reshape_permute: extent product of {new_shape} does not match {x.shape}"
        )

    if sorted(axis_order) != list(range(len(new_shape))):
        raise TensorError(
            f"reshape_permute: {axis_order} is not a permutation of {len(new_shape)} axes"
        )

    original = x.shape
    inverse = tuple(int(i) for i in np.argsort(axis_order))
    out = np.transpose(x.numpy().reshape(new_shape), axis_order).copy()

    def backward_fn(g: np.ndarray):
        return (np.transpose(g, inverse).reshape(original),)

    return _emit("reshape_permute", out, (x,), backward_fn)


def swap_last(a: Tensor) -> Tensor:
    """Transpose the last two axes."""
    order = list(range(a.ndim))
    order[-1], order[-2] = order[-2], order[-1]
    return reshape_permute(a, a.shape, order)


def take(a: Tensor, indices: np.ndarray, axis: int) -> Tensor:
    """Gather entries along ``axis``; used for token permutations and replication."""
    indices = np.asarray(indices, dtype=np.int64)
    axis = axis % a.ndim
    if indices.size and (indices.min() < 0 or indices.max() >= a.shape[axis]):
        raise TensorError(f"take: index out of range for axis {axis} of {a.shape}")
    x = a.numpy()

    def backward_fn(g: np.ndarray):
        gx = np.zeros_like(x)
        where = (slice(None),) * axis + (indices,)
        np.add.at(gx, where, g)
        return (gx,)

    return _emit("take", np.take(x, indices, axis=axis), (a,), backward_fn)


def gather_bias(table: Tensor, index: np.ndarray) -> Tensor:
    """
    Look up ``table[:, index]``: ``[heads, T]`` with an ``[n, n]`` index map
    gives ``[heads, n, n]``.
    """
    index = np.asarray(index, dtype=np.int64)
    if table.ndim != 2:
        raise TensorError(f"gather_bias: table must be [heads, entries], got {table.shape}")
    if index.min() < 0 or index.max() >= table.shape[1]:
        raise TensorError(
            f"gather_bias: index range [{index.min()}, {index.max()}] "
            f"exceeds {table.shape[1]} table entries"
        )
    t = table.numpy()

    def backward_fn(g: np.ndarray):
        gt = np.zeros_like(t)
        np.add.at(gt, (slice(None), index), g)
        return (gt,)

    return _emit("gather_bias", t[:, index], (table,), backward_fn)


def block_diag(blocks: Tensor) -> Tensor:
    """
    Assemble ``[..., N, b, b]`` blocks into a ``[..., N*b, N*b]`` block-diagonal matrix.

    Off-block entries are exact zeros.
    """
    if blocks.ndim < 3 or blocks.shape[-1] != blocks.shape[-2]:
        raise TensorError(f"block_diag: expected [..., N, b, b], got {blocks.shape}")

    *lead, n_blocks, b, _ = blocks.shape
    x = blocks.numpy()
    eye = np.eye(n_blocks, dtype=x.dtype)
    out = np.einsum("...ipq,ij->...ipjq", x, eye).reshape(*lead, n_blocks * b, n_blocks * b)

    def backward_fn(g: np.ndarray):
        g5 = g.reshape(*lead, n_blocks, b, n_blocks, b)
        return (np.einsum("...ipiq->...ipq", g5).copy(),)

    return _emit("block_diag", out, (blocks,), backward_fn)


def kron_expand(a: Tensor, factor: int) -> Tensor:
    """
    Kronecker product with a ``factor x factor`` all-ones matrix over the last two axes.
    """
    x = a.numpy()
    out = np.repeat(np.repeat(x, factor, axis=-2), factor, axis=-1)
    *lead, rows, cols = x.shape

    def backward_fn(g: np.ndarray):
        return (g.reshape(*lead, rows, factor, cols, factor).sum(axis=(-3, -1)),)

    return _emit("kron_expand", out, (a,), backward_fn)


def group_mean(a: Tensor, axis: int, groups: int) -> Tensor:
    """Average consecutive groups of ``groups`` entries along ``axis``."""
    axis = axis % a.ndim
    extent = a.shape[axis]
    if extent % groups != 0:
        raise TensorError(f"group_mean: axis extent {extent} not divisible by {groups}")
    x = a.numpy()
    split = x.shape[:axis] + (extent // groups, groups) + x.shape[axis + 1:]

    def backward_fn(g: np.ndarray):
        expanded = np.repeat(g, groups, axis=axis) / groups
        return (expanded.astype(x.dtype),)

    return _emit("group_mean", x.reshape(split).mean(axis=axis + 1), (a,), backward_fn)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    """Concatenate along ``axis``; all other extents must agree."""
    tensors = tuple(tensors)
    _same_dtype("concat", *tensors)
    arrays = [t.numpy() for t in tensors]
    try:
        out = np.concatenate(arrays, axis=axis)
    except ValueError as e:
        shapes = ", ".join(str(t.shape) for t in tensors)
        raise TensorError(f"concat: incompatible shapes {shapes}") from e

    splits = np.cumsum([arr.shape[axis] for arr in arrays])[:-1]

    def backward_fn(g: np.ndarray):
        return tuple(np.split(g, splits, axis=axis))

    return _emit("concat", out, tensors, backward_fn)


def repeat_tokens(a: Tensor, factor: int, axis: int = 1) -> Tensor:
    """Repeat each entry along ``axis`` ``factor`` times, consecutively."""
    axis = axis % a.ndim
    x = a.numpy()
    grouped = x.shape[:axis] + (x.shape[axis], factor) + x.shape[axis + 1:]

    def backward_fn(g: np.ndarray):
        return (g.reshape(grouped).sum(axis=axis + 1),)

    return _emit("repeat_tokens", np.repeat(x, factor, axis=axis), (a,), backward_fn)


def upsample_nearest(a: Tensor, factor: int) -> Tensor:
    """Nearest-neighbour upsampling of a ``[B, H, W, C]`` map by an integer factor."""
    if a.ndim != 4:
        raise TensorError(f"upsample_nearest expects [B, H, W, C], got {a.shape}")
    x = a.numpy()
    bsz, h, w, c = x.shape
    out = np.repeat(np.repeat(x, factor, axis=1), factor, axis=2)

    def backward_fn(g: np.ndarray):
        return (g.reshape(bsz, h, factor, w, factor, c).sum(axis=(2, 4)),)

    return _emit("upsample_nearest", out, (a,), backward_fn)


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 1,
) -> Tensor:
    """
    2-D convolution of an NHWC map with a ``[kh, kw, C_in, C_out]`` kernel.

    Computed as an im2col matmul; the multiply-accumulates are reported
    under ``"conv2d"``.

    Raises:
        TensorError: On channel mismatch or an empty output
    """
    _same_dtype("conv2d", x, weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise TensorError(f"conv2d expects [B,H,W,C] and [kh,kw,Cin,Cout], got {x.shape}, {weight.shape}")

    bsz, h, w, c_in = x.shape
    kh, kw, w_in, c_out = weight.shape
    if w_in != c_in:
        raise TensorError(f"conv2d channel mismatch: input {c_in}, kernel {w_in}")

    h_out = (h + 2 * padding - kh) // stride + 1
    w_out = (w + 2 * padding - kw) // stride + 1
    if h_out <= 0 or w_out <= 0:
        raise TensorError(f"conv2d produces an empty output for input {x.shape}")

    xp = np.pad(x.numpy(), ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    cols = np.empty((bsz, h_out, w_out, kh, kw, c_in), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, i, j, :] = xp[
                :, i:i + stride * h_out:stride, j:j + stride * w_out:stride, :
            ]

    k_len = kh * kw * c_in
    cols2d = cols.reshape(-1, k_len)
    w2d = weight.numpy().reshape(k_len, c_out)
    record_macs("conv2d", cols2d.shape[0] * k_len * c_out)
    out = (cols2d @ w2d).reshape(bsz, h_out, w_out, c_out)

    def conv_backward(g: np.ndarray):
        g2d = g.reshape(-1, c_out)
        gw = (cols2d.T @ g2d).reshape(weight.shape) if weight.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (g2d @ w2d.T).reshape(bsz, h_out, w_out, kh, kw, c_in)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, i:i + stride * h_out:stride, j:j + stride * w_out:stride, :] += (
                        gcols[:, :, :, i, j, :]
                    )
            gx = gxp[:, padding:padding + h, padding:padding + w, :]
        return gx, gw

    result = _emit("conv2d", out, (x, weight), conv_backward)
    if bias is not None:
        result = add(result, bias)
    return result


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """
    Mean cross-entropy of ``[..., C]`` logits against integer labels ``[...]``.

    Raises:
        TensorError: If label shape differs or a label lies outside ``[0, C)``
    """
    labels = np.asarray(labels)
    x = logits.numpy()
    classes = x.shape[-1]

    if labels.shape != x.shape[:-1]:
        raise TensorError(f"cross_entropy: labels {labels.shape} vs logits {x.shape}")

    if not np.issubdtype(labels.dtype, np.integer):
        raise TensorError("cross_entropy: labels must be integers")

    if labels.min() < 0 or labels.max() >= classes:
        raise TensorError(
            f"cross_entropy: labels must lie in [0, {classes}), "
            f"got range [{labels.min()}, {labels.max()}]"
        )

    shifted = x - x.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    log_probs = shifted - log_z
    picked = np.take_along_axis(log_probs, labels[..., None], axis=-1)
    count = labels.size
    loss = np.asarray(-picked.sum() / count, dtype=x.dtype)

    def backward_fn(g: np.ndarray):
        probs = np.exp(log_probs)
        np.put_along_axis(
            probs, labels[..., None],
            np.take_along_axis(probs, labels[..., None], axis=-1) - 1.0, axis=-1,
        )
        return (probs * (g / count),)

    return _emit("cross_entropy", loss, (logits,), backward_fn)
