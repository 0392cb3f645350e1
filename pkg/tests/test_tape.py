"""Tape mechanics, elementwise ops, and the finite-difference oracle."""

import numpy as np
import pytest

from adrflow.errors import ShapeMismatchError
from adrflow.tape import (Tape, add, backward, elementwise, finite_difference_grad,
                          mul, scale, silu, silu_grad, softplus, sub, total)

SILU_AT_ONE = 0.7310585786300049  # 1/(1+e^-1), frozen from a scalar evaluation


def test_add_matches_definition():
    assert np.allclose(add(np.array([1.0, 2.0]), np.array([3.0, 4.0])), [4.0, 6.0])


def test_silu_at_zero_and_one():
    assert silu(np.array(0.0)) == 0.0
    assert abs(float(silu(np.array(1.0))) - SILU_AT_ONE) < 1e-15


def test_elementwise_dispatch_and_unknown_op():
    a = np.array([1.0, -2.0])
    assert np.allclose(elementwise("mul", a, 2.0), [2.0, -4.0])
    assert np.allclose(elementwise("silu", a), silu(a))
    with pytest.raises(ValueError):
        elementwise("cosh", a, a)


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeMismatchError) as err:
        add(np.zeros((2, 3)), np.zeros((4, 5)))
    assert "(2, 3)" in str(err.value) and "(4, 5)" in str(err.value)


def test_backward_of_sum_is_all_ones():
    x = np.random.default_rng(1).normal(size=(2, 3))
    tape = Tape()
    v = tape.leaf(x)
    grads = backward(tape, total(v))
    assert np.array_equal(grads[v.id], np.ones_like(x))


def test_backward_of_half_square_sum_is_identity():
    x = np.array([1.0, 2.0])
    tape = Tape()
    v = tape.leaf(x)
    loss = scale(total(mul(v, v)), 0.5)
    grads = backward(tape, loss)
    assert np.allclose(grads[v.id], x)


def test_backward_rejects_nonscalar_and_foreign_vars():
    tape = Tape()
    v = tape.leaf(np.ones((2, 2)))
    with pytest.raises(ValueError):
        backward(tape, mul(v, v))
    other = Tape().leaf(np.array(1.0))
    with pytest.raises(ValueError):
        backward(tape, other)


def test_mixed_tapes_rejected():
    a = Tape().leaf(np.ones(3))
    b = Tape().leaf(np.ones(3))
    with pytest.raises(ValueError):
        add(a, b)


def test_backward_linearity_of_adjoints():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(3, 3))
    tape = Tape()
    v = tape.leaf(x)
    l1 = total(mul(v, v))
    l2 = total(silu(v))
    g1 = backward(tape, l1)[v.id]
    g2 = backward(tape, l2)[v.id]
    g12 = backward(tape, add(l1, l2))[v.id]
    assert np.allclose(g12, g1 + g2, atol=1e-14)


def test_backward_replay_is_bit_identical():
    rng = np.random.default_rng(3)
    tape = Tape()
    v = tape.leaf(rng.normal(size=(4, 4)))
    loss = total(mul(silu(v), v))
    first = backward(tape, loss)[v.id]
    second = backward(tape, loss)[v.id]
    assert np.array_equal(first, second)


def test_finite_difference_on_sum_and_squares():
    x = np.array([1.0, 2.0])
    assert np.allclose(finite_difference_grad(lambda a: a.sum(), x, 1e-6), [1, 1])
    g = finite_difference_grad(lambda a: 0.5 * (a ** 2).sum(), x, 1e-6)
    assert np.allclose(g, x, atol=1e-9)


def test_finite_difference_rejects_bad_step():
    with pytest.raises(ValueError):
        finite_difference_grad(lambda a: a.sum(), np.ones(2), 0.0)


@pytest.mark.parametrize("seed", range(20))
def test_elementwise_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(4, 4))
    y = rng.normal(size=(4, 4))

    cases = {
        "add": lambda a: total(mul(add(a, y), add(a, y))),
        "sub": lambda a: total(mul(sub(a, y), sub(a, y))),
        "mul": lambda a: total(mul(a, y)),
        "scale": lambda a: total(scale(a, 2.5)),
        "silu": lambda a: total(silu(a)),
        "silu_grad": lambda a: total(silu_grad(a)),
        "softplus": lambda a: total(softplus(a)),
    }
    for name, f in cases.items():
        tape = Tape()
        v = tape.leaf(x.copy())
        analytic = backward(tape, f(v))[v.id]
        fd = finite_difference_grad(lambda a: float(f(a)), x.copy(), 1e-6)
        denom = np.maximum(np.maximum(np.abs(fd), np.abs(analytic)), 1e-6)
        assert np.max(np.abs(fd - analytic) / denom) < 1e-5, name


def test_broadcast_gradients_reduce_correctly():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(2, 3))
    b = rng.normal(size=(3,))
    tape = Tape()
    vb = tape.leaf(b)
    loss = total(mul(add(x, vb), add(x, vb)))
    analytic = backward(tape, loss)[vb.id]
    fd = finite_difference_grad(
        lambda bb: float(((x + bb) ** 2).sum()), b.copy(), 1e-6)
    assert analytic.shape == b.shape
    assert np.allclose(analytic, fd, atol=1e-8)
