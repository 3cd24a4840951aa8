"""
Tests for the tensor core: tape differentiation, primitives, batch norm, Adam and gradient checking.
"""

import numpy as np
import pytest

from app.numeric.gradcheck import grad_check, numeric_gradient, relative_errors
from app.numeric.optim import AdamState, adam_step
from app.numeric.tensor import (
    BatchNormState, Tape, Tensor, add, affine, batch_norm, batched_matvec, concat_columns,
    gather_rows, mse_loss, relu, reshape, segment_aggregate, sigmoid, sum_all,
)
from app.utils.exceptions import (
    BatchSizeError, ContractError, DimensionError, NonFiniteError, UnknownMethodError,
)

TOLERANCE = 1e-5


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.mark.unit
class TestTape:
    """Test tape recording and the backward pass."""

    def test_non_finite_values_rejected(self):
        with pytest.raises(NonFiniteError):
            Tensor([1.0, np.nan])

    def test_untracked_ops_record_nothing(self):
        """Test that operations on plain tensors compute values only."""
        out = affine(np.ones((2, 3)), np.ones((3, 1)))

        assert not out.tracked
        assert out.value.tolist() == [[3.0], [3.0]]

    def test_backward_requires_scalar(self):
        tape = Tape()
        x = tape.watch(np.ones(3), "x")

        with pytest.raises(ContractError, match="scalar"):
            tape.backward(relu(x))

    def test_backward_root_from_other_tape(self):
        first, second = Tape(), Tape()
        root = sum_all(first.watch(np.ones(2), "x"))

        with pytest.raises(ContractError):
            second.backward(root)

    def test_duplicate_watch(self):
        tape = Tape()
        tape.watch(np.ones(2), "x")
        with pytest.raises(ContractError):
            tape.watch(np.ones(2), "x")

    def test_unused_parameter_gets_zeros(self):
        tape = Tape()
        x = tape.watch(np.ones(2), "x")
        tape.watch(np.ones((2, 2)), "unused")

        grads = tape.backward(sum_all(x))

        assert grads["x"].tolist() == [1.0, 1.0]
        assert grads["unused"].tolist() == [[0.0, 0.0], [0.0, 0.0]]

    def test_gradients_accumulate_over_reuse(self):
        """Test that a value used twice receives both contributions."""
        tape = Tape()
        x = tape.watch(np.array([[2.0, -1.0]]), "x")

        grads = tape.backward(sum_all(add(x, x)))

        assert grads["x"].tolist() == [[2.0, 2.0]]


@pytest.mark.unit
class TestPrimitives:
    """Test primitive values, shape checks and gradients."""

    def test_affine_shape_mismatch(self):
        with pytest.raises(DimensionError):
            affine(np.ones((2, 3)), np.ones((2, 2)))

    def test_affine_bias_mismatch(self):
        with pytest.raises(DimensionError):
            affine(np.ones((2, 3)), np.ones((3, 2)), np.ones(3))

    def test_affine_gradient(self, rng):
        W, b = rng.normal(size=(3, 2)), rng.normal(size=2)
        target = rng.normal(size=(4, 2))

        assert grad_check(lambda x: mse_loss(affine(x, W, b), target), rng.normal(size=(4, 3))) < TOLERANCE
        x = rng.normal(size=(4, 3))
        assert grad_check(lambda w: mse_loss(affine(x, w, b), target), W) < TOLERANCE

    def test_relu_gradient(self, rng):
        x = rng.normal(size=(5, 3))
        target = rng.normal(size=(5, 3))
        kinks = np.abs(x) < 1e-3

        assert grad_check(lambda v: mse_loss(relu(v), target), x, exclude=kinks) < TOLERANCE

    def test_relu_zero_subgradient(self):
        tape = Tape()
        x = tape.watch(np.array([[0.0, 1.0, -1.0]]), "x")
        grads = tape.backward(sum_all(relu(x)))
        assert grads["x"].tolist() == [[0.0, 1.0, 0.0]]

    def test_sigmoid_is_stable(self):
        out = sigmoid(np.array([[-1000.0, 0.0, 1000.0]]))
        assert out.value.tolist() == [[0.0, 0.5, 1.0]]

    def test_sigmoid_gradient(self, rng):
        target = rng.uniform(size=(3, 2))
        assert grad_check(lambda v: mse_loss(sigmoid(v), target), rng.normal(size=(3, 2))) < TOLERANCE

    def test_concat_and_gather_gradient(self, rng):
        other = rng.normal(size=(4, 2))
        index = np.array([3, 0, 3, 1])
        target = rng.normal(size=(4, 5))

        def f(v):
            return mse_loss(gather_rows(concat_columns([v, other]), index), target)

        assert grad_check(f, rng.normal(size=(4, 3))) < TOLERANCE

    def test_reshape_and_batched_matvec_gradient(self, rng):
        h = rng.normal(size=(3, 2))
        target = rng.normal(size=(3, 2))

        def f(flat):
            return mse_loss(batched_matvec(reshape(flat, (3, 2, 2)), h), target)

        assert grad_check(f, rng.normal(size=(3, 4))) < TOLERANCE

    def test_batched_matvec_value(self):
        W = np.array([[[1.0, 2.0], [3.0, 4.0]]])
        h = np.array([[1.0, -1.0]])
        assert batched_matvec(W, h).value.tolist() == [[-1.0, -1.0]]

    def test_reshape_size_mismatch(self):
        with pytest.raises(DimensionError):
            reshape(np.ones((2, 3)), (4, 2))


@pytest.mark.unit
class TestSegmentAggregate:
    """Test per-receiver mean, sum and max reductions."""

    SEGMENTS = np.array([0, 0, 2, 2, 2])

    def test_values(self):
        messages = np.array([[1.0], [3.0], [2.0], [6.0], [4.0]])

        assert segment_aggregate(messages, self.SEGMENTS, 3, "mean").value.tolist() == [[2.0], [0.0], [4.0]]
        assert segment_aggregate(messages, self.SEGMENTS, 3, "sum").value.tolist() == [[4.0], [0.0], [12.0]]
        assert segment_aggregate(messages, self.SEGMENTS, 3, "max").value.tolist() == [[3.0], [0.0], [6.0]]

    @pytest.mark.parametrize("method", ["mean", "sum", "max"])
    def test_gradients(self, rng, method):
        target = rng.normal(size=(3, 2))

        def f(m):
            return mse_loss(segment_aggregate(m, self.SEGMENTS, 3, method), target)

        assert grad_check(f, rng.normal(size=(5, 2))) < TOLERANCE

    def test_max_tie_goes_to_first_row(self):
        tape = Tape()
        messages = tape.watch(np.array([[1.0], [1.0]]), "m")

        grads = tape.backward(sum_all(segment_aggregate(messages, np.array([0, 0]), 1, "max")))

        assert grads["m"].tolist() == [[1.0], [0.0]]

    def test_unknown_method(self):
        with pytest.raises(UnknownMethodError):
            segment_aggregate(np.ones((2, 1)), np.array([0, 0]), 1, "median")


@pytest.mark.unit
class TestBatchNorm:
    """Test batch normalization modes and running statistics."""

    def test_train_mode_statistics(self):
        """Test biased normalization and unbiased running variance with momentum 0.1."""
        state = BatchNormState.fresh(2)
        x = np.array([[1.0, 2.0], [3.0, 6.0]])

        out = batch_norm(x, state)

        assert out.value == pytest.approx(np.array([[-1.0, -1.0], [1.0, 1.0]]), rel=1e-4)
        assert state.running_mean.tolist() == pytest.approx([0.2, 0.4])
        assert state.running_var.tolist() == pytest.approx([1.1, 1.7])

    def test_statistics_frozen_when_asked(self):
        state = BatchNormState.fresh(2)
        batch_norm(np.array([[1.0, 2.0], [3.0, 6.0]]), state, update_stats=False)

        assert state.running_mean.tolist() == [0.0, 0.0]
        assert state.running_var.tolist() == [1.0, 1.0]

    def test_eval_mode_uses_running_statistics(self):
        state = BatchNormState.fresh(1)
        state.running_mean = np.array([2.0])
        state.running_var = np.array([4.0])
        state.training = False

        out = batch_norm(np.array([[6.0]]), state)

        assert out.value[0, 0] == pytest.approx(4.0 / np.sqrt(4.0 + 1e-5))

    def test_single_row_in_train_mode(self):
        with pytest.raises(BatchSizeError):
            batch_norm(np.ones((1, 3)), BatchNormState.fresh(3))

    def test_input_gradient(self, rng):
        target = rng.normal(size=(6, 3))

        def f(v):
            return mse_loss(batch_norm(v, BatchNormState.fresh(3), update_stats=False), target)

        assert grad_check(f, rng.normal(size=(6, 3))) < TOLERANCE

    def test_scale_gradient(self, rng):
        x = rng.normal(size=(6, 3))
        target = rng.normal(size=(6, 3))

        def f(gamma):
            return mse_loss(batch_norm(x, BatchNormState.fresh(3), gamma, np.zeros(3), update_stats=False), target)

        assert grad_check(f, rng.normal(size=3)) < TOLERANCE


@pytest.mark.unit
class TestAdam:
    """Test the Adam update and its L2 term."""

    def test_first_step_moves_by_learning_rate(self):
        """Test that bias correction makes the first step lr * sign(gradient)."""
        state = AdamState()
        params = {"w": np.array([1.0, -2.0])}

        updated = adam_step(params, {"w": np.array([0.5, -0.1])}, state, lr=0.1)

        assert updated["w"].tolist() == pytest.approx([0.9, -1.9])
        assert params["w"].tolist() == [1.0, -2.0]
        assert state.t == 1

    def test_weight_decay_only_for_named_parameters(self):
        """Test that 2 * lambda * p is added to decayed parameters only."""
        params = {"w": np.array([1.0, -2.0]), "b": np.array([3.0])}
        grads = {"w": np.zeros(2), "b": np.zeros(1)}

        updated = adam_step(params, grads, AdamState(), lr=0.1, weight_decay=0.5, decay=["w"])

        assert updated["w"].tolist() == pytest.approx([0.9, -1.9])
        assert updated["b"].tolist() == [3.0]

    def test_gradient_shape_mismatch(self):
        with pytest.raises(DimensionError):
            adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState(), lr=0.1)

    def test_minimizes_quadratic(self):
        params = {"w": np.array([5.0, -3.0])}
        state = AdamState()
        for _ in range(2000):
            params = adam_step(params, {"w": 2.0 * params["w"]}, state, lr=0.05)
        assert np.abs(params["w"]).max() < 0.1


@pytest.mark.unit
class TestGradCheck:
    """Test the finite-difference helpers."""

    def test_numeric_gradient_of_quadratic(self):
        grad = numeric_gradient(lambda v: float(np.sum(v ** 2)), np.array([1.0, -2.0]))
        assert grad.tolist() == pytest.approx([2.0, -4.0])

    def test_relative_errors_scale(self):
        assert relative_errors(np.array([100.0]), np.array([101.0])).tolist() == pytest.approx([1.0 / 101.0])
        assert relative_errors(np.array([0.0]), np.array([0.5])).tolist() == [0.5]

    def test_detects_wrong_gradient(self):
        """Test that a value computed outside the tape shows up as a gradient mismatch."""

        def f(x):
            # x ** 2 enters as an untracked constant, so the tape sees only the identity term
            return sum_all(add(x, Tensor(x.value ** 2)))

        assert grad_check(f, np.array([[1.0, 2.0]])) == pytest.approx(0.8, rel=1e-4)
