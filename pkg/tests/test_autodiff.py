"""Tests for the reverse-mode tape."""

from __future__ import annotations

import numpy as np
import pytest

from dtr_recovery.autodiff import DEFAULT_SLOPE, Tape, grad_check, masked_sq_error
from dtr_recovery.cli.gradcheck import primitive_cases
from dtr_recovery.errors import ContractError, ShapeError

CASES = primitive_cases(seed=7)


@pytest.mark.parametrize("name", sorted(CASES))
def test_primitive_gradients_match_central_differences(name: str) -> None:
    """Every primitive's analytic gradient agrees with central differences."""
    builder, leaves = CASES[name]
    report = grad_check(builder, leaves, h=1e-5, tol=1e-4)
    assert report.passed, report.max_errors


def test_masked_sq_error_value_and_gradient(rng: np.random.Generator) -> None:
    """The loss is the masked squared error and its gradient vanishes off the mask."""
    x = rng.standard_normal((4, 3, 2))
    o = rng.standard_normal((4, 3, 2))
    m = (rng.uniform(size=(4, 3, 2)) < 0.5).astype(float)
    tape = Tape()
    node = tape.leaf(x)
    loss = masked_sq_error(node, o, m)
    assert loss.value.item() == pytest.approx(np.sum((m * (x - o)) ** 2))
    tape.backward(loss)
    assert np.array_equal(node.grad[m == 0], np.zeros(int((m == 0).sum())))
    assert np.allclose(node.grad, 2 * m * (x - o))


def test_gradients_accumulate_over_reuse() -> None:
    """A node used twice receives the sum of both contributions."""
    tape = Tape()
    x = tape.leaf(np.full((1, 1, 1), 3.0))
    loss = tape.reduce_sum_squares(tape.add(x, x))
    tape.backward(loss)
    assert x.grad.item() == pytest.approx(2 * 2 * 6.0)


def test_unreached_leaf_gets_zero_gradient() -> None:
    """Leaves the loss does not depend on get zeros, constants get nothing."""
    tape = Tape()
    x = tape.leaf(np.ones((2, 2, 1)))
    unused = tape.leaf(np.ones((3, 1, 1)))
    const = tape.constant(np.ones((2, 2, 1)))
    grads = tape.backward(tape.reduce_sum_squares(tape.hadamard(x, const)))
    assert np.array_equal(grads[unused.id], np.zeros((3, 1, 1)))
    assert const.grad is None
    assert np.allclose(grads[x.id], 2.0)


def test_backward_rejects_non_scalar_and_foreign_loss() -> None:
    """backward needs a scalar loss recorded on the same tape."""
    tape = Tape()
    x = tape.leaf(np.ones((2, 2, 1)))
    with pytest.raises(ContractError):
        tape.backward(x)
    other = Tape()
    with pytest.raises(ContractError):
        other.backward(tape.reduce_sum_squares(x))
    with pytest.raises(ContractError):
        other.add(x, other.leaf(np.ones((2, 2, 1))))


def test_leaf_references_value() -> None:
    """In-place updates of a parameter array are seen by the next forward pass."""
    value = np.ones((1, 1, 1))
    tape = Tape()
    leaf = tape.leaf(value)
    value += 1.0
    assert leaf.value.item() == 2.0


def test_shape_errors() -> None:
    """Mismatched operands are rejected when recorded."""
    tape = Tape()
    a = tape.leaf(np.ones((2, 2, 1)))
    b = tape.leaf(np.ones((3, 2, 1)))
    with pytest.raises(ShapeError):
        tape.add(a, b)
    with pytest.raises(ShapeError):
        tape.conv2d(a, tape.leaf(np.ones((3, 3, 2, 1))))
    with pytest.raises(ShapeError):
        tape.crop(a, 1, 1, 2, 2)


def test_conv2d_matches_direct_sum(rng: np.random.Generator) -> None:
    """Strided padded convolution equals the direct cross-correlation sum."""
    x = rng.standard_normal((5, 6, 2))
    k = rng.standard_normal((3, 3, 2, 4))
    tape = Tape()
    out = tape.conv2d(tape.constant(x), tape.constant(k), stride=2, padding=1)
    xp = np.pad(x, ((1, 1), (1, 1), (0, 0)))
    assert out.shape == (3, 3, 4)
    for i in range(3):
        for j in range(3):
            window = xp[2 * i : 2 * i + 3, 2 * j : 2 * j + 3, :]
            assert np.allclose(out.value[i, j], np.einsum("abc,abcd->d", window, k))


def test_grad_check_requires_positive_step() -> None:
    """A non-positive difference step is a contract violation."""
    with pytest.raises(ContractError):
        grad_check(lambda tape, n: tape.reduce_sum_squares(n["x"]), {"x": np.ones((1, 1, 1))}, h=0)


def test_grad_check_detects_wrong_gradient() -> None:
    """A builder whose recorded gradient is wrong fails the check."""

    def builder(tape: Tape, nodes):  # noqa: ANN001, ANN202
        x = nodes["x"]
        # records x**2 but the value fed forward is x**3
        out = tape.reduce_sum_squares(x)
        out.value = np.sum(x.value**3).reshape(1, 1, 1)
        return out

    report = grad_check(builder, {"x": np.full((1, 1, 1), 2.0)})
    assert not report.passed


def test_activation_closed_forms() -> None:
    """Leaky ReLU scales negatives by 0.01; sigmoid(0) is one half."""
    tape = Tape()
    assert DEFAULT_SLOPE == 0.01
    x = tape.constant(np.array([-1.0, 2.0]).reshape(2, 1, 1))
    assert np.array_equal(tape.leaky_relu(x).value.ravel(), [-0.01, 2.0])
    assert tape.sigmoid(tape.constant(np.zeros((1, 1, 1)))).value.item() == 0.5


def test_conv2d_identity_kernel(rng: np.random.Generator) -> None:
    """A 1x1 kernel holding the identity matrix returns its input."""
    x = rng.standard_normal((4, 5, 3))
    kernel = np.eye(3).reshape(1, 1, 3, 3)
    tape = Tape()
    out = tape.conv2d(tape.constant(x), tape.constant(kernel))
    assert np.array_equal(out.value, x)


def _two_losses(tape: Tape, x_value: np.ndarray, o: np.ndarray, m: np.ndarray):  # noqa: ANN202
    x = tape.leaf(x_value)
    hidden = tape.leaky_relu(tape.conv2d(x, tape.constant(np.full((3, 3, 2, 2), 0.1)), padding=1))
    return x, tape.reduce_sum_squares(hidden), tape.masked_sq_error(hidden, o, m)


def test_gradient_is_linear_in_the_loss(rng: np.random.Generator) -> None:
    """grad(a L1 + b L2) equals a grad L1 + b grad L2."""
    x_value = rng.standard_normal((4, 4, 2))
    o = rng.standard_normal((4, 4, 2))
    m = (rng.uniform(size=(4, 4, 2)) < 0.5).astype(float)
    a, b = 0.7, -2.5

    grads = []
    for pick in (1, 2):
        tape = Tape()
        x, l1, l2 = _two_losses(tape, x_value, o, m)
        grads.append(tape.backward(l1 if pick == 1 else l2)[x.id])
    tape = Tape()
    x, l1, l2 = _two_losses(tape, x_value, o, m)
    combined = tape.backward(tape.add(tape.scalar_mul(l1, a), tape.scalar_mul(l2, b)))[x.id]
    assert np.allclose(combined, a * grads[0] + b * grads[1], rtol=1e-12, atol=1e-12)


def test_gradients_are_bitwise_deterministic(rng: np.random.Generator) -> None:
    """The same graph on the same values gives identical gradient bytes."""
    x_value = rng.standard_normal((4, 4, 2))
    o = rng.standard_normal((4, 4, 2))
    m = np.ones((4, 4, 2))
    results = []
    for _ in range(2):
        tape = Tape()
        x, l1, l2 = _two_losses(tape, x_value, o, m)
        results.append(tape.backward(tape.add(l1, l2))[x.id])
    assert results[0].tobytes() == results[1].tobytes()


def test_grad_check_of_constant_graph_is_empty_and_passes() -> None:
    """A loss without leaves yields a passing report with no entries."""

    def builder(tape: Tape, nodes):  # noqa: ANN001, ANN202
        return tape.reduce_sum_squares(tape.constant(np.ones((2, 2, 1))))

    report = grad_check(builder, {})
    assert report.max_errors == {}
    assert report.passed
