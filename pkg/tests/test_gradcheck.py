"""Tests comparing tape gradients with central finite differences."""

import numpy as np
import pytest

from attnmerge.tensor import (
    GradCheckError,
    Tensor,
    active_tape,
    block_diag,
    check_gradients,
    concat,
    conv2d,
    cross_entropy,
    finite_difference_grad,
    gather_bias,
    gelu,
    group_mean,
    kron_expand,
    matmul,
    mul,
    normalize_rows,
    relative_error,
    repeat_tokens,
    reshape_permute,
    softmax_rows,
    sum_all,
    take,
    upsample_nearest,
)

TOLERANCE = 1e-5


def weighted(out: Tensor) -> Tensor:
    """Scalar with a non-uniform upstream gradient."""
    w = np.random.default_rng(99).standard_normal(out.shape)
    return sum_all(mul(out, Tensor(w)))


def make_params(shapes, seed=0):
    rng = np.random.default_rng(seed)
    return {
        name: Tensor(rng.standard_normal(shape), requires_grad=True, name=name)
        for name, shape in shapes.items()
    }


BIAS_INDEX = np.array([[0, 3, 6], [1, 1, 2], [5, 4, 0]])
LABELS = np.array([[0, 1, 2], [2, 2, 1]])

OP_CASES = {
    "matmul": ({"a": (2, 3, 4), "b": (4, 5)}, lambda p: matmul(p["a"], p["b"])),
    "batched_matmul": ({"a": (2, 3, 4), "b": (2, 4, 2)}, lambda p: matmul(p["a"], p["b"])),
    "softmax_rows": ({"x": (3, 5)}, lambda p: softmax_rows(p["x"])),
    "normalize_rows": ({"x": (3, 4)}, lambda p: normalize_rows(softmax_rows(p["x"]))),
    "block_diag": ({"x": (2, 3, 2, 2)}, lambda p: block_diag(p["x"])),
    "kron_expand": ({"x": (2, 3, 3)}, lambda p: kron_expand(p["x"], 2)),
    "group_mean": ({"x": (8, 3)}, lambda p: group_mean(p["x"], axis=0, groups=4)),
    "take": ({"x": (2, 5)}, lambda p: take(p["x"], np.array([4, 0, 0, 2]), axis=-1)),
    "gather_bias": ({"t": (2, 7)}, lambda p: gather_bias(p["t"], BIAS_INDEX)),
    "reshape_permute": ({"x": (2, 3, 4)}, lambda p: reshape_permute(p["x"], (4, 6), (1, 0))),
    "conv2d": (
        {"x": (1, 4, 4, 2), "w": (3, 3, 2, 3), "b": (3,)},
        lambda p: conv2d(p["x"], p["w"], p["b"], stride=2, padding=1),
    ),
    "gelu": ({"x": (4, 3)}, lambda p: gelu(p["x"])),
    "upsample_nearest": ({"x": (1, 2, 2, 3)}, lambda p: upsample_nearest(p["x"], 2)),
    "concat": ({"a": (2, 3), "b": (2, 2)}, lambda p: concat([p["a"], p["b"]], axis=-1)),
    "repeat_tokens": ({"x": (1, 3, 2)}, lambda p: repeat_tokens(p["x"], 4)),
}


def bad_square(a: Tensor) -> Tensor:
    """x² with a backward that is off by a factor of two."""
    x = a.numpy()
    out = Tensor.adopt(x * x, requires_grad=a.requires_grad)
    tape = active_tape()
    if tape is not None and a.requires_grad:
        tape.record("bad_square", (a,), out, lambda g: (g * 4.0 * x,))
    return out


class TestPrimitiveGradients:
    """Each primitive's backward agrees with finite differences."""

    @pytest.mark.parametrize("case", sorted(OP_CASES))
    def test_primitive(self, case):
        """Relative error stays below 1e-5 in f64."""
        shapes, fn = OP_CASES[case]
        report = check_gradients(
            lambda p: weighted(fn(p)),
            make_params(shapes),
            epsilon=1e-5,
            tolerance=TOLERANCE,
            abs_floor=1e-4,
        )
        assert report.passed, report.worst

    def test_cross_entropy(self):
        """Cross-entropy is already scalar."""
        report = check_gradients(
            lambda p: cross_entropy(p["z"], LABELS),
            make_params({"z": (2, 3, 4)}),
            epsilon=1e-5,
            tolerance=TOLERANCE,
            abs_floor=1e-4,
        )
        assert report.passed, report.worst


class TestCheckGradients:
    """Tests for the checker itself."""

    def test_detects_wrong_backward(self):
        """A backward off by 2x gives a relative error of about one half."""
        params = make_params({"x": (3,)})
        params["x"] = Tensor([0.5, 1.0, 2.0], requires_grad=True, name="x")

        report = check_gradients(lambda p: sum_all(bad_square(p["x"])), params)

        assert not report.passed
        assert report.worst.name == "x"
        assert report.worst.max_rel_error == pytest.approx(0.5, abs=1e-4)

    def test_report_fields(self):
        """Each parameter gets size, checked count, worst index and norm."""
        params = make_params({"a": (2, 3), "b": (3, 2)})
        report = check_gradients(lambda p: weighted(matmul(p["a"], p["b"])), params)

        assert [entry.name for entry in report.params] == ["a", "b"]
        first = report.params[0]
        assert first.size == 6
        assert first.checked == 6
        assert len(first.worst_index) == 2
        assert first.analytic_norm > 0

    def test_coordinate_sampling(self):
        """max_coords_per_param limits the checked coordinates."""
        params = make_params({"x": (4, 5)})
        report = check_gradients(
            lambda p: weighted(gelu(p["x"])),
            params,
            max_coords_per_param=3,
            rng=np.random.default_rng(0),
        )
        assert report.params[0].checked == 3

    def test_parameters_unchanged(self):
        """Checking leaves every parameter buffer as it was."""
        params = make_params({"a": (2, 3), "b": (3, 2)})
        before = {name: p.numpy().copy() for name, p in params.items()}

        check_gradients(lambda p: weighted(matmul(p["a"], p["b"])), params)

        for name, p in params.items():
            np.testing.assert_array_equal(p.numpy(), before[name])

    def test_empty_params(self):
        """At least one parameter is required."""
        with pytest.raises(GradCheckError, match="at least one"):
            check_gradients(lambda p: Tensor([0.0]), {})


class TestFiniteDifference:
    """Tests for the central-difference helper."""

    def test_quadratic(self):
        """d/dx sum(x²) = 2x."""
        p = Tensor([1.0, -2.0, 3.0])
        grad = finite_difference_grad(lambda v: float((v**2).sum()), p, epsilon=1e-6)
        np.testing.assert_allclose(grad.numpy(), [2.0, -4.0, 6.0], rtol=1e-6)

    def test_non_finite_value_names_coordinate(self):
        """A non-finite evaluation reports its coordinate."""
        p = Tensor([[1.0, 0.0]])

        def f(v):
            return np.inf if v[0, 0] > 1.0 else float(v.sum())

        with pytest.raises(GradCheckError, match=r"\(0, 0\)"):
            finite_difference_grad(f, p)

    def test_one_coordinate_perturbed_per_evaluation(self):
        """Each evaluation differs from the base point in exactly one coordinate."""
        p = Tensor([[1.0, -2.0], [0.5, 3.0]])
        seen = []

        def f(v):
            seen.append(v.copy())
            return float(v.sum())

        finite_difference_grad(f, p)

        assert len(seen) == 8
        for v in seen:
            assert np.count_nonzero(v != p.numpy()) == 1

    def test_failing_function_leaves_parameter(self):
        """An exception mid-evaluation does not disturb the parameter."""
        p = Tensor([1.0, 2.0])

        def f(v):
            raise ValueError("diverged")

        with pytest.raises(ValueError, match="diverged"):
            finite_difference_grad(f, p)
        np.testing.assert_array_equal(p.numpy(), [1.0, 2.0])

    def test_epsilon_must_be_positive(self):
        """A zero step is rejected."""
        with pytest.raises(GradCheckError, match="positive"):
            finite_difference_grad(lambda v: 0.0, Tensor([1.0]), epsilon=0.0)

    def test_relative_error_floor(self):
        """Tiny values are compared against the floor, not each other."""
        errors = relative_error(np.array([1e-9, 2.0]), np.array([2e-9, 1.0]), abs_floor=1e-6)
        np.testing.assert_allclose(errors, [1e-3, 0.5])
