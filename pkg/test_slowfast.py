"""Tests for the slow-fast model class and the toy system.

Tests cover:
- Right-hand sides of the slow and fast equations
- The approximate manifold and the distance to it
- The reduced slow field, including the toy closed form
- Construction-time validation of MultiscaleSystem and State
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from exceptions import ContractViolation
from slowfast import (MultiscaleSystem, State, ToySystemParams, approx_manifold,
                      eval_fast_rhs, eval_reduced_rhs, eval_slow_rhs, manifold_distance,
                      toy_reduced_closed_form, toy_system)


def _linear_system(lam, f_value, eps=1e-3, slow_dim=1):
    """Constant forcing f = f_value, zero slow field."""
    lam = np.asarray(lam, dtype=float)
    f_value = np.asarray(f_value, dtype=float)
    return MultiscaleSystem(slow_dim=slow_dim, fast_dim=lam.size, epsilon=eps, lambda_diag=lam,
                            f=lambda y: f_value.copy(), g=lambda x, y: np.zeros(slow_dim))


# ──────────────────────────────────────────────
# Slow and fast right-hand sides
# ──────────────────────────────────────────────

def test_slow_rhs_toy_substitution():
    sys = toy_system(ToySystemParams(a=1.0, b=0.1), 1e-5)
    assert_array_equal(eval_slow_rhs(sys, [0.0], [1.0]), [-1.0])


def test_slow_rhs_zero_field():
    sys = _linear_system([1.0, 3.0], [0.0, 0.0], slow_dim=2)
    assert_array_equal(eval_slow_rhs(sys, [0.4, 0.2], [1.0, -2.0]), [0.0, 0.0])


def test_slow_rhs_toy_hand_value():
    sys = toy_system(ToySystemParams(a=0.1, b=1.0), 1e-3)
    x = math.sin(5.0) ** 2
    expected = -5.0 * math.sin(5.0) ** 2 - 0.1 * 25.0
    assert_allclose(eval_slow_rhs(sys, [x], [5.0]), [expected], rtol=1e-15)


def test_slow_rhs_dimension_mismatch():
    sys = toy_system(ToySystemParams(a=1.0, b=0.1), 1e-5)
    with pytest.raises(ContractViolation):
        eval_slow_rhs(sys, [0.0, 1.0], [1.0])


def test_fast_rhs_vanishes_on_manifold():
    sys = toy_system(ToySystemParams(a=1.0, b=1.0), 1e-4)
    rng = np.random.default_rng(7)
    for y in rng.uniform(-3.0, 3.0, size=50):
        assert_array_equal(eval_fast_rhs(sys, approx_manifold(sys, [y]), [y]), [0.0])


def test_fast_rhs_toy_substitution():
    sys = toy_system(ToySystemParams(a=1.0, b=1.0), 0.1)
    assert_allclose(eval_fast_rhs(sys, [1.0], [0.0]), [-10.0], rtol=1e-15)


def test_fast_rhs_toy_hand_value():
    sys = toy_system(ToySystemParams(a=1.0, b=1.0), 1e-4)
    expected = (-0.3 + math.sin(1.0) ** 2) / 1e-4
    assert_allclose(eval_fast_rhs(sys, [0.3], [1.0]), [expected], rtol=1e-14)


def test_fast_rhs_dimension_mismatch():
    sys = _linear_system([1.0, 2.0], [4.0, 4.0])
    with pytest.raises(ContractViolation):
        eval_fast_rhs(sys, [1.0], [0.0])


# ──────────────────────────────────────────────
# Manifold
# ──────────────────────────────────────────────

def test_manifold_identity_lambda_returns_forcing():
    sys = _linear_system([1.0, 1.0], [0.25, -0.5])
    assert_array_equal(approx_manifold(sys, [3.0]), [0.25, -0.5])


def test_manifold_toy_initial_condition():
    sys = toy_system(ToySystemParams(a=1.0, b=0.1), 1e-5)
    assert_allclose(approx_manifold(sys, [1.0]), [math.sin(0.1) ** 2], rtol=1e-15)


def test_manifold_componentwise_division():
    sys = _linear_system([1.0, 2.0], [4.0, 4.0])
    assert_array_equal(approx_manifold(sys, [0.0]), [4.0, 2.0])


def test_distance_zero_on_manifold():
    sys = toy_system(ToySystemParams(a=1.0, b=1.0), 1e-4)
    assert manifold_distance(sys, approx_manifold(sys, [0.7]), [0.7]) == 0.0


def test_distance_scalar_offset():
    sys = toy_system(ToySystemParams(a=1.0, b=1.0), 1e-4)
    x = approx_manifold(sys, [0.7]) + 0.5
    assert manifold_distance(sys, x, [0.7]) == pytest.approx(0.5, rel=1e-15)


def test_distance_offset_start():
    sys = toy_system(ToySystemParams(a=1.0, b=1.0), 1e-4)
    x0 = math.sin(1.0) ** 2 + 0.01
    assert manifold_distance(sys, [x0], [1.0]) == pytest.approx(0.01, rel=1e-12)


def test_distance_uses_max_norm_by_default():
    sys = _linear_system([1.0, 1.0], [0.0, 0.0])
    assert manifold_distance(sys, [3.0, -4.0], [0.0]) == 4.0
    assert manifold_distance(sys, [3.0, -4.0], [0.0], norm="2") == pytest.approx(5.0)
    with pytest.raises(ContractViolation):
        manifold_distance(sys, [3.0, -4.0], [0.0], norm="1")


# ──────────────────────────────────────────────
# Reduced field
# ──────────────────────────────────────────────

def test_reduced_rhs_fixed_point():
    sys = toy_system(ToySystemParams(a=1.0, b=0.1), 1e-5)
    assert_array_equal(eval_reduced_rhs(sys, [0.0]), [0.0])


def test_reduced_rhs_toy_values():
    sys = toy_system(ToySystemParams(a=1.0, b=0.1), 1e-5)
    assert_allclose(eval_reduced_rhs(sys, [1.0]), [-math.sin(0.1) ** 2 - 1.0], rtol=1e-15)

    sys = toy_system(ToySystemParams(a=0.1, b=1.0), 1e-3)
    assert_allclose(eval_reduced_rhs(sys, [5.0]), [-5.0 * math.sin(5.0) ** 2 - 2.5], rtol=1e-15)


def test_reduced_rhs_is_slow_rhs_on_manifold():
    params = ToySystemParams(a=0.6, b=0.3)
    sys = toy_system(params, 1e-4)
    rng = np.random.default_rng(11)
    for Y in rng.uniform(-2.0, 2.0, size=25):
        composed = eval_slow_rhs(sys, approx_manifold(sys, [Y]), [Y])
        assert_array_equal(eval_reduced_rhs(sys, [Y]), composed)
        assert_allclose(eval_reduced_rhs(sys, [Y]), toy_reduced_closed_form(params, Y),
                        rtol=1e-14, atol=1e-300)


def test_toy_forcing_lipschitz_below_b():
    b = 0.1
    sys = toy_system(ToySystemParams(a=1.0, b=b), 1e-5)
    ys = np.linspace(0.01, 2.0, 400)
    slopes = np.abs(np.diff([sys.f(np.array([y]))[0] for y in ys]) / np.diff(ys))
    assert slopes.max() <= b


# ──────────────────────────────────────────────
# Validation
# ──────────────────────────────────────────────

@pytest.mark.parametrize("lam", [[2.0], [0.5, 1.0], [1.0, -1.0]])
def test_system_rejects_unnormalized_lambda(lam):
    with pytest.raises(ContractViolation):
        _linear_system(lam, np.zeros(len(lam)))


@pytest.mark.parametrize("eps", [0.0, -1e-3, float("inf")])
def test_system_rejects_bad_epsilon(eps):
    with pytest.raises(ContractViolation):
        _linear_system([1.0], [0.0], eps=eps)


def test_lambda_max_and_with_epsilon():
    sys = _linear_system([1.0, 4.0], [0.0, 0.0], eps=1e-3)
    assert sys.lambda_max == 4.0
    other = sys.with_epsilon(1e-5)
    assert other.epsilon == 1e-5
    assert_array_equal(other.lambda_diag, sys.lambda_diag)


def test_state_for_system_checks_lengths_and_time():
    sys = _linear_system([1.0, 2.0], [0.0, 0.0])
    s = State.for_system(sys, [1.0, 2.0], [0.5], t=0.25)
    assert s.t == 0.25 and s.is_finite()
    with pytest.raises(ContractViolation):
        State.for_system(sys, [1.0], [0.5])
    with pytest.raises(ContractViolation):
        State.for_system(sys, [1.0, 2.0], [0.5], t=-1.0)
