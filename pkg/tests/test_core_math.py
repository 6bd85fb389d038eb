import numpy as np
import pytest

from mfpaths import backend
from mfpaths.core_math import (Activation, RngStream, activation_apply,
                               activation_grad, gaussian_draw, matvec)

ALL_KINDS = list(Activation)


def test_sigmoid_at_zero():
    assert activation_apply(Activation.SIGMOID, 0.0) == 0.5


def test_relu_negative_is_zero():
    assert activation_apply(Activation.RELU, -1.0) == 0.0


def test_tanh_matches_antiderivative_difference():
    # d/dx log cosh(x) = tanh(x); central difference of the antiderivative
    x, h = 0.3, 1e-6
    fd = (np.log(np.cosh(x + h)) - np.log(np.cosh(x - h))) / (2 * h)
    assert abs(activation_apply(Activation.TANH, x) - fd) < 1e-8


def test_sigmoid_grad_at_zero():
    assert activation_grad(Activation.SIGMOID, 0.0) == 0.25


def test_relu_grad():
    assert activation_grad(Activation.RELU, 2.0) == 1.0
    assert activation_grad(Activation.RELU, 0.0) == 0.0


def test_tanh_grad_finite_difference():
    rng = np.random.default_rng(0)
    xs = rng.normal(0, 2, 100)
    h = 1e-6
    for x in xs:
        fd = (activation_apply(Activation.TANH, x + h)
              - activation_apply(Activation.TANH, x - h)) / (2 * h)
        assert abs(activation_grad(Activation.TANH, x) - fd) < 1e-6


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_grad_matches_finite_difference_everywhere(kind):
    rng = np.random.default_rng(1)
    xs = rng.normal(0, 3, 1000)
    if kind == Activation.RELU:
        xs = xs[np.abs(xs) > 1e-3]  # kink excluded
    h = 1e-6
    fd = (activation_apply(kind, xs + h) - activation_apply(kind, xs - h)) / (2 * h)
    grad = activation_grad(kind, xs)
    assert np.all(np.abs(grad - fd) <= 1e-5 * np.maximum(1.0, np.abs(fd)))


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_activations_monotone(kind):
    xs = np.linspace(-5, 5, 201)
    vals = activation_apply(kind, xs)
    assert np.all(np.diff(vals) >= 0)


def test_extreme_inputs_do_not_overflow():
    for kind in ALL_KINDS:
        for x in (-1e4, 1e4):
            assert np.isfinite(activation_apply(kind, x))
            assert np.isfinite(activation_grad(kind, x))


def _naive_matvec(m, v):
    out = np.empty(m.shape[0])
    for i in range(m.shape[0]):
        acc = 0.0
        for j in range(m.shape[1]):
            acc += m[i, j] * v[j]
        out[i] = acc
    return out


def test_matvec_identity_and_zero():
    v = np.array([1.0, 2.0, 3.0])
    assert np.array_equal(matvec(np.eye(3), v), v)
    assert np.array_equal(matvec(np.zeros((4, 3)), v), np.zeros(4))


def test_matvec_matches_naive_oracle_bitwise(both_backends):
    rng = np.random.default_rng(7)
    for _ in range(100):
        rows, cols = rng.integers(1, 17, 2)
        m = rng.normal(size=(rows, cols))
        v = rng.normal(size=cols)
        assert np.array_equal(matvec(m, v), _naive_matvec(m, v))


def test_matvec_shape_mismatch():
    with pytest.raises(ValueError, match="incompatible shapes"):
        matvec(np.ones((2, 3)), np.ones(4))


def test_rng_same_seed_same_draws():
    a = RngStream(123).normal(size=10_000)
    b = RngStream(123).normal(size=10_000)
    assert np.array_equal(a, b)


def test_rng_child_streams_deterministic_and_distinct():
    root = RngStream(5)
    c1, c2 = root.child(1), root.child(2)
    again = RngStream(5).child(1)
    assert c1.seed == again.seed
    assert c1.seed != c2.seed
    assert np.array_equal(c1.normal(size=100), RngStream(5).child(1).normal(size=100))


def test_gaussian_draw_zero_std_is_exact():
    assert gaussian_draw(RngStream(0), 2.5, 0.0) == 2.5


def test_gaussian_draw_negative_std_rejected():
    with pytest.raises(ValueError, match="nonnegative"):
        gaussian_draw(RngStream(0), 0.0, -1.0)


def test_gaussian_draw_sample_mean():
    rng = RngStream(42)
    draws = [gaussian_draw(rng, 0.0, 1.0) for _ in range(100_000)]
    assert abs(np.mean(draws)) < 0.02


def test_gaussian_draw_deterministic_sequence():
    seq1 = [gaussian_draw(RngStream(9).child(0), 1.0, 2.0)]
    rng_a, rng_b = RngStream(9), RngStream(9)
    a = [gaussian_draw(rng_a, 0.0, 1.0) for _ in range(50)]
    b = [gaussian_draw(rng_b, 0.0, 1.0) for _ in range(50)]
    assert a == b and len(seq1) == 1


def test_backend_flag_roundtrip():
    backend.set_backend("numpy")
    assert backend.backend_name() == "numpy"
    backend.set_backend("auto")
    with pytest.raises(ValueError):
        backend.set_backend("gpu")
