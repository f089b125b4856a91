"""Tests for tensors, primitives and the gradient tape."""

import threading

import numpy as np
import pytest

from attnmerge.analysis import MacCounterError, mac_counter
from attnmerge.tensor import (
    Conv2d,
    GradTape,
    Linear,
    Module,
    TapeError,
    Tensor,
    TensorError,
    add,
    backward,
    block_diag,
    concat,
    conv2d,
    cross_entropy,
    gather_bias,
    group_mean,
    kron_expand,
    matmul,
    mean_all,
    mul,
    normalize_rows,
    repeat_tokens,
    reshape_permute,
    scale,
    softmax_rows,
    sub,
    sum_all,
    take,
    upsample_nearest,
)


def param(values, name="p"):
    return Tensor(np.asarray(values, dtype=np.float64), requires_grad=True, name=name)


class TestTensor:
    """Tests for the tensor type itself."""

    def test_buffer_is_copied_and_read_only(self):
        """Mutating the source array does not reach the tensor, and the view is frozen."""
        source = np.arange(6.0).reshape(2, 3)
        t = Tensor(source)
        source[0, 0] = 100.0

        assert t.numpy()[0, 0] == 0.0
        with pytest.raises(ValueError):
            t.numpy()[0, 0] = 1.0

    def test_shape_strides_size(self):
        """Row-major strides follow from the shape."""
        t = Tensor.zeros((2, 3, 4))
        assert t.shape == (2, 3, 4)
        assert t.strides == (12, 4, 1)
        assert t.size == 24
        assert t.ndim == 3

    def test_dtypes(self):
        """f32 and f64 are supported; integer data becomes f64."""
        assert Tensor.ones((2,), dtype="f32").dtype == np.float32
        assert Tensor([1, 2, 3]).dtype == np.float64
        with pytest.raises(TensorError):
            Tensor([1.0], dtype="f16")

    def test_zero_extent_rejected(self):
        """Extents must be positive."""
        with pytest.raises(TensorError, match="positive"):
            Tensor(np.zeros((0, 3)))

    def test_identity_hash(self):
        """Equal contents do not make tensors equal."""
        a, b = Tensor([1.0]), Tensor([1.0])
        assert a != b
        assert len({a, b}) == 2

    def test_item(self):
        """item() needs exactly one element."""
        assert Tensor([[2.5]]).item() == 2.5
        with pytest.raises(TensorError):
            Tensor([1.0, 2.0]).item()

    def test_randn_reproducible(self):
        """The same seed gives the same values."""
        a = Tensor.randn((3, 3), np.random.default_rng(5))
        b = Tensor.randn((3, 3), np.random.default_rng(5))
        np.testing.assert_array_equal(a.numpy(), b.numpy())

    def test_astype(self):
        """astype converts and keeps the name."""
        t = Tensor([1.5], name="w").astype("f32")
        assert t.dtype == np.float32
        assert t.name == "w"

    def test_operators(self):
        """Python operators dispatch to the primitives."""
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        b = Tensor([[1.0, 0.0], [0.0, 1.0]])

        np.testing.assert_array_equal((a @ b).numpy(), a.numpy())
        np.testing.assert_array_equal((a + b).numpy(), a.numpy() + b.numpy())
        np.testing.assert_array_equal((a - b).numpy(), a.numpy() - b.numpy())
        np.testing.assert_array_equal((a * 2).numpy(), 2 * a.numpy())
        np.testing.assert_array_equal((-a).numpy(), -a.numpy())


class TestPrimitives:
    """Forward values and shape checks of the primitives."""

    def test_matmul_shared_rhs(self):
        """A 2-D right operand is shared across leading axes."""
        rng = np.random.default_rng(0)
        a = Tensor(rng.standard_normal((2, 3, 4)))
        b = Tensor(rng.standard_normal((4, 5)))
        np.testing.assert_allclose(matmul(a, b).numpy(), a.numpy() @ b.numpy())

    def test_matmul_mismatch_names_shapes(self):
        """Inner-extent mismatch reports both shapes."""
        with pytest.raises(TensorError) as exc_info:
            matmul(Tensor.zeros((2, 3)), Tensor.zeros((4, 5)))
        assert "(2, 3)" in str(exc_info.value)
        assert "(4, 5)" in str(exc_info.value)

    def test_mixed_dtypes_rejected(self):
        """Operands must share a dtype."""
        with pytest.raises(TensorError, match="mixed dtypes"):
            add(Tensor.zeros((2,), "f32"), Tensor.zeros((2,), "f64"))

    def test_suffix_broadcast_only(self):
        """A right operand may only match a trailing suffix."""
        a = Tensor.ones((2, 3))
        np.testing.assert_array_equal(add(a, Tensor([1.0, 2.0, 3.0])).numpy()[1], [2.0, 3.0, 4.0])
        with pytest.raises(TensorError):
            add(a, Tensor.ones((2, 1)))
        with pytest.raises(TensorError):
            mul(a, Tensor.ones((2,)))

    def test_sub_requires_equal_shapes(self):
        """sub does not broadcast."""
        with pytest.raises(TensorError):
            sub(Tensor.ones((2, 3)), Tensor.ones((3,)))

    def test_softmax_rows(self):
        """Rows sum to one and large logits do not overflow."""
        out = softmax_rows(Tensor([[1000.0, 1000.0], [0.0, np.log(3.0)]])).numpy()
        np.testing.assert_allclose(out, [[0.5, 0.5], [0.25, 0.75]])

    def test_softmax_known_row(self):
        """softmax([1, 2, 3]) starts with 0.09003057."""
        out = softmax_rows(Tensor([1.0, 2.0, 3.0])).numpy()
        np.testing.assert_allclose(out, [0.09003057, 0.24472847, 0.66524096], rtol=1e-7)

    def test_softmax_random_rows_sum_to_one(self):
        """Every row of a random batch sums to 1."""
        x = np.random.default_rng(21).standard_normal((3, 5, 7)) * 10
        sums = softmax_rows(Tensor(x)).numpy().sum(axis=-1)
        np.testing.assert_allclose(sums, 1.0, atol=1e-12)

    def test_softmax_shift_invariant(self):
        """Adding a constant per row does not change the result."""
        rng = np.random.default_rng(22)
        x = rng.standard_normal((4, 6))
        shift = rng.standard_normal((4, 1)) * 50
        np.testing.assert_allclose(
            softmax_rows(Tensor(x + shift)).numpy(), softmax_rows(Tensor(x)).numpy(), atol=1e-12
        )

    def test_matmul_known_product(self):
        """[[1, 2], [3, 4]] @ [[5], [6]] = [[17], [39]]."""
        out = matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[5.0], [6.0]]))
        assert out.numpy().tolist() == [[17.0], [39.0]]

    def test_matmul_associative(self):
        """(AB)C equals A(BC) to rounding."""
        rng = np.random.default_rng(23)
        a, b, c = (Tensor(rng.standard_normal(s)) for s in ((3, 4), (4, 5), (5, 2)))
        np.testing.assert_allclose(
            matmul(matmul(a, b), c).numpy(), matmul(a, matmul(b, c)).numpy(), atol=1e-10
        )

    def test_softmax_rejects_non_finite(self):
        """NaN or infinite logits are an error."""
        with pytest.raises(TensorError, match="non-finite"):
            softmax_rows(Tensor([[0.0, np.inf]]))

    def test_normalize_rows(self):
        """Rows are divided by their sums; zero rows are rejected."""
        np.testing.assert_allclose(normalize_rows(Tensor([[1.0, 3.0]])).numpy(), [[0.25, 0.75]])
        with pytest.raises(TensorError, match="sums to"):
            normalize_rows(Tensor([[1.0, 1.0], [0.0, 0.0]]))

    def test_reshape_permute(self):
        """Reshape then transpose, materialised row-major."""
        x = Tensor(np.arange(6.0))
        out = reshape_permute(x, (2, 3), (1, 0))
        np.testing.assert_array_equal(out.numpy(), np.arange(6.0).reshape(2, 3).T)

    def test_reshape_permute_inverse(self):
        """Applying the inverse axis order and the original shape restores the input."""
        x = Tensor(np.random.default_rng(24).standard_normal((2, 3, 4)))
        order = (2, 0, 1)
        y = reshape_permute(x, (4, 3, 2), order)
        back = reshape_permute(y, y.shape, tuple(np.argsort(order)))
        restored = reshape_permute(back, x.shape, (0, 1, 2))
        np.testing.assert_array_equal(restored.numpy(), x.numpy())

    def test_reshape_permute_errors(self):
        """Extent and permutation mismatches are rejected."""
        x = Tensor(np.arange(6.0))
        with pytest.raises(TensorError, match="extent product"):
            reshape_permute(x, (4, 2), (1, 0))
        with pytest.raises(TensorError, match="not a permutation"):
            reshape_permute(x, (2, 3), (0, 0))

    def test_block_diag(self):
        """Blocks land on the diagonal with exact zeros elsewhere."""
        blocks = Tensor(np.arange(8.0).reshape(2, 2, 2))
        out = block_diag(blocks).numpy()

        expected = np.zeros((4, 4))
        expected[:2, :2] = [[0.0, 1.0], [2.0, 3.0]]
        expected[2:, 2:] = [[4.0, 5.0], [6.0, 7.0]]
        np.testing.assert_array_equal(out, expected)

    def test_kron_expand(self):
        """Each entry becomes a constant factor x factor block."""
        out = kron_expand(Tensor([[1.0, 2.0], [3.0, 4.0]]), 2).numpy()
        np.testing.assert_array_equal(out, np.kron([[1.0, 2.0], [3.0, 4.0]], np.ones((2, 2))))

    def test_group_mean(self):
        """Consecutive groups are averaged."""
        out = group_mean(Tensor(np.arange(8.0).reshape(4, 2)), axis=0, groups=2).numpy()
        np.testing.assert_array_equal(out, [[1.0, 2.0], [5.0, 6.0]])
        with pytest.raises(TensorError):
            group_mean(Tensor.ones((3, 2)), axis=0, groups=2)

    def test_repeat_tokens(self):
        """Each token is repeated consecutively."""
        out = repeat_tokens(Tensor([[[1.0], [2.0]]]), 4).numpy()
        assert out[0, :, 0].tolist() == [1.0] * 4 + [2.0] * 4

    def test_take_and_range_check(self):
        """take gathers along an axis and checks the index range."""
        x = Tensor([[1.0, 2.0, 3.0]])
        np.testing.assert_array_equal(take(x, np.array([2, 0]), axis=-1).numpy(), [[3.0, 1.0]])
        with pytest.raises(TensorError):
            take(x, np.array([3]), axis=1)

    def test_gather_bias(self):
        """table[:, index] per head."""
        table = Tensor([[10.0, 20.0, 30.0]])
        out = gather_bias(table, np.array([[0, 2], [1, 1]])).numpy()
        np.testing.assert_array_equal(out, [[[10.0, 30.0], [20.0, 20.0]]])
        with pytest.raises(TensorError):
            gather_bias(table, np.array([[3]]))

    def test_concat_mismatch(self):
        """Incompatible extents are reported with every shape."""
        with pytest.raises(TensorError, match="incompatible"):
            concat([Tensor.ones((2, 3)), Tensor.ones((3, 3))], axis=-1)

    def test_upsample_nearest(self):
        """Every pixel becomes a factor x factor patch."""
        x = Tensor(np.arange(4.0).reshape(1, 2, 2, 1))
        out = upsample_nearest(x, 2).numpy()[0, :, :, 0]
        np.testing.assert_array_equal(out, np.kron(np.arange(4.0).reshape(2, 2), np.ones((2, 2))))

    def test_conv2d_matches_direct_sum(self):
        """im2col convolution equals a direct loop, with stride and padding."""
        rng = np.random.default_rng(3)
        x = rng.standard_normal((1, 5, 5, 2))
        w = rng.standard_normal((3, 3, 2, 3))
        out = conv2d(Tensor(x), Tensor(w), stride=2, padding=1).numpy()

        xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        expected = np.zeros((1, 3, 3, 3))
        for i in range(3):
            for j in range(3):
                patch = xp[0, 2 * i:2 * i + 3, 2 * j:2 * j + 3, :]
                expected[0, i, j] = np.einsum("abc,abcd->d", patch, w)
        np.testing.assert_allclose(out, expected)

    def test_conv2d_channel_mismatch(self):
        """Kernel input channels must match."""
        with pytest.raises(TensorError, match="channel mismatch"):
            conv2d(Tensor.ones((1, 4, 4, 2)), Tensor.ones((3, 3, 3, 1)))

    def test_cross_entropy_uniform(self):
        """Zero logits give ln C."""
        loss = cross_entropy(Tensor.zeros((2, 4, 4, 3)), np.zeros((2, 4, 4), dtype=np.int64))
        assert loss.item() == pytest.approx(np.log(3.0), rel=1e-12)

    def test_cross_entropy_label_checks(self):
        """Labels must be integers in range with a matching shape."""
        logits = Tensor.zeros((1, 2, 3))
        with pytest.raises(TensorError, match="must lie in"):
            cross_entropy(logits, np.array([[0, 3]]))
        with pytest.raises(TensorError, match="integers"):
            cross_entropy(logits, np.array([[0.0, 1.0]]))
        with pytest.raises(TensorError):
            cross_entropy(logits, np.array([0, 1]))


class TestTape:
    """Tests for recording and backward."""

    def test_matmul_gradient(self):
        """d sum(A B) / dA = 1 Bᵀ and / dB = Aᵀ 1."""
        a = param([[1.0, 2.0], [3.0, 4.0]], "a")
        b = param([[5.0, 6.0], [7.0, 8.0]], "b")
        with GradTape() as tape:
            loss = sum_all(matmul(a, b))
        grads = backward(tape, loss)

        np.testing.assert_array_equal(grads[a], np.ones((2, 2)) @ b.numpy().T)
        np.testing.assert_array_equal(grads[b], a.numpy().T @ np.ones((2, 2)))

    def test_broadcast_gradient_reduces(self):
        """A broadcast operand receives the sum over leading axes."""
        a = param(np.ones((3, 2)), "a")
        b = param([1.0, 2.0], "b")
        with GradTape() as tape:
            loss = sum_all(mul(a, b))
        grads = backward(tape, loss)

        np.testing.assert_array_equal(grads[b], [3.0, 3.0])
        np.testing.assert_array_equal(grads[a], [[1.0, 2.0]] * 3)

    def test_reused_tensor_accumulates(self):
        """A tensor used twice sums both contributions."""
        a = param([2.0], "a")
        with GradTape() as tape:
            loss = sum_all(mul(a, a))
        assert backward(tape, loss)[a].tolist() == [4.0]

    def test_unreached_tensor_gets_zeros(self):
        """Tensors the loss does not depend on get zero gradients."""
        a, unused = param([1.0], "a"), param([[1.0, 2.0]], "u")
        with GradTape() as tape:
            loss = sum_all(a)
        grads = backward(tape, loss)

        assert unused not in grads
        np.testing.assert_array_equal(grads[unused], np.zeros((1, 2)))

    def test_constants_not_recorded(self):
        """Operations on tensors without requires_grad leave the tape empty."""
        with GradTape() as tape:
            sum_all(Tensor([1.0, 2.0]))
        assert len(tape) == 0

    def test_ops_in_execution_order(self):
        """The tape lists ops as executed."""
        a = param([[1.0, 2.0]])
        with GradTape() as tape:
            mean_all(softmax_rows(a))
        assert tape.ops() == ["softmax_rows", "sum", "scale"]

    def test_non_scalar_loss(self):
        """backward needs a single-element loss."""
        a = param([1.0, 2.0])
        with GradTape() as tape:
            out = mul(a, a)
        with pytest.raises(TapeError, match="scalar"):
            backward(tape, out)

    def test_loss_from_other_tape(self):
        """A loss recorded elsewhere is rejected."""
        a = param([1.0])
        with GradTape():
            loss = sum_all(a)
        with pytest.raises(TapeError, match="different tape"):
            backward(GradTape(), loss)

    def test_reset_invalidates(self):
        """Tensors from before a reset cannot be differentiated."""
        a = param([1.0])
        with GradTape() as tape:
            loss = sum_all(a)
        tape.reset()
        with pytest.raises(TapeError, match="reset"):
            backward(tape, loss)

    def test_stale_intermediate_rejected(self):
        """A fresh loss built on a tensor recorded before the reset is rejected."""
        w = param([1.0])
        with GradTape() as tape:
            h = scale(w, 3.0)
            tape.reset()
            loss = sum_all(h)

        with pytest.raises(TapeError, match="before the tape was reset"):
            backward(tape, loss)

    def test_reset_then_fresh_pass(self):
        """Ops recorded after a reset differentiate normally."""
        w = param([1.0])
        with GradTape() as tape:
            scale(w, 3.0)
            tape.reset()
            loss = sum_all(scale(w, 3.0))

        assert backward(tape, loss)[w].tolist() == [3.0]

    def test_unrecorded_loss(self):
        """A plain tensor is not a recorded loss."""
        with pytest.raises(TapeError, match="not produced"):
            backward(GradTape(), param([1.0]))

    def test_tapes_are_per_thread(self):
        """A tape active on one thread does not record another thread's ops."""
        a = param([1.0, 2.0])
        lengths = {}

        def worker():
            with GradTape() as tape:
                sum_all(a)
            lengths["worker"] = len(tape)

        with GradTape() as main_tape:
            thread = threading.Thread(target=worker)
            thread.start()
            thread.join()
        assert lengths["worker"] == 1
        assert len(main_tape) == 0

    def test_by_name(self):
        """Named leaves are reported by name."""
        w = param([[1.0, 2.0]], "layer.weight")
        with GradTape() as tape:
            loss = sum_all(w)
        assert set(backward(tape, loss).by_name()) == {"layer.weight"}


class TestMacCounter:
    """Tests for the scoped MAC counter."""

    def test_matmul_count(self):
        """matmul(m, k, n) costs m*k*n."""
        with mac_counter("mm") as counter:
            matmul(Tensor.ones((3, 4)), Tensor.ones((4, 5)))
        assert counter.count == 60
        assert counter.by_primitive == {"matmul": 60}

    def test_batched_matmul_count(self):
        """Leading axes multiply the row count."""
        with mac_counter("mm") as counter:
            matmul(Tensor.ones((2, 3, 4)), Tensor.ones((2, 4, 5)))
        assert counter.count == 120

    def test_additive(self):
        """Two products sum."""
        with mac_counter("two") as counter:
            matmul(Tensor.ones((3, 4)), Tensor.ones((4, 5)))
            matmul(Tensor.ones((2, 2)), Tensor.ones((2, 2)))
        assert counter.count == 68

    def test_conv_count(self):
        """A convolution costs output pixels x kernel volume x output channels."""
        with mac_counter("conv") as counter:
            conv2d(Tensor.ones((1, 4, 4, 2)), Tensor.ones((3, 3, 2, 5)), stride=2, padding=1)
        assert counter.count == 2 * 2 * (3 * 3 * 2) * 5

    def test_elementwise_ops_not_counted(self):
        """Only matmul and convolution are counted."""
        with mac_counter("elementwise") as counter:
            softmax_rows(add(Tensor.ones((4, 4)), Tensor.ones((4, 4))))
        assert counter.count == 0

    def test_nested_scopes(self):
        """An inner scope's MACs also reach the outer scope."""
        with mac_counter("outer") as outer:
            matmul(Tensor.ones((1, 2)), Tensor.ones((2, 1)))
            with mac_counter("inner") as inner:
                matmul(Tensor.ones((2, 2)), Tensor.ones((2, 2)))
        assert inner.count == 8
        assert outer.count == 10

    def test_same_name_nesting_rejected(self):
        """Re-entering an active scope name fails."""
        with mac_counter("scope"):
            with pytest.raises(MacCounterError):
                with mac_counter("scope"):
                    pass

    def test_no_counter_no_error(self):
        """Counting is a no-op outside any scope."""
        matmul(Tensor.ones((2, 2)), Tensor.ones((2, 2)))


class TestModule:
    """Tests for parameter containers."""

    def test_named_parameters_and_paths(self, rng):
        """Parameters are addressed by dotted paths, children after own params."""
        root = Module()
        root.add_parameter("scale", np.ones(2))
        root.add_child("fc", Linear(2, 3, rng))
        root.rename_parameters()

        params = root.named_parameters()
        assert list(params) == ["scale", "fc.weight", "fc.bias"]
        assert params["fc.weight"].name == "fc.weight"
        assert root.parameter_count() == 2 + 6 + 3

    def test_set_parameter(self, rng):
        """Replacement keeps the path as name and requires grad."""
        fc = Linear(2, 2, rng)
        fc.set_parameter("weight", Tensor(np.eye(2)))

        assert fc.weight.requires_grad
        assert fc.weight.name == "weight"
        np.testing.assert_array_equal(fc(Tensor([[1.0, 2.0]])).numpy(), [[1.0, 2.0]])

    def test_set_parameter_errors(self, rng):
        """Unknown paths and shape changes are rejected."""
        fc = Linear(2, 2, rng)
        with pytest.raises(TensorError, match="Unknown"):
            fc.set_parameter("gain", Tensor.ones((2,)))
        with pytest.raises(TensorError, match="shape"):
            fc.set_parameter("weight", Tensor.ones((3, 2)))

    def test_linear_zero_init_and_width_check(self, rng):
        """zero_init gives zero weights; the input width is checked."""
        fc = Linear(3, 2, rng, zero_init=True)
        assert not fc.weight.numpy().any()
        with pytest.raises(TensorError, match="last extent"):
            fc(Tensor.ones((1, 4)))

    def test_linear_without_bias(self, rng):
        """bias=False registers only the weight."""
        assert list(Linear(3, 2, rng, bias=False).named_parameters()) == ["weight"]

    def test_conv2d_module_shapes(self, rng):
        """Stride-2 3x3 convolution halves the extents."""
        conv = Conv2d(3, 5, rng, stride=2)
        assert conv(Tensor.ones((1, 8, 8, 3))).shape == (1, 4, 4, 5)
