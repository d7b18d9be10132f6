import math

import mpmath
import numpy as np
import pytest

from src.vtd import numkernel as nk
from src.vtd.errors import InvalidParameters, OrderMismatch, PrecisionMismatch, SingularMatrix
from src.vtd.numkernel import Jet, jet_arith, lu_factor, solve_linear


def test_default_context_is_double():
    ctx = nk.active()
    assert not ctx.extended
    assert ctx.eps == np.finfo(np.float64).eps


def test_extended_context_rounds_rationals_once(extended):
    third = extended.ratio(1, 3)
    assert isinstance(third, mpmath.mpf)
    assert abs(third * 3 - 1) < mpmath.mpf(2) ** -120
    assert extended.eps == mpmath.mpf(2) ** -127


def test_extended_scalar_rejected_in_double_run():
    with pytest.raises(PrecisionMismatch):
        nk.active().scalar(mpmath.mpf(1))


def test_bits_below_64_rejected():
    with pytest.raises(ValueError):
        nk.PrecisionConfig(mode="extended", bits=32)


def test_solve_linear_matches_numpy():
    A = np.array([[4.0, 1.0, 2.0], [1.0, 5.0, 3.0], [2.0, 3.0, 6.0]])
    b = np.array([1.0, -2.0, 0.5])
    assert np.allclose(solve_linear(A, b), np.linalg.solve(A, b), atol=1e-14)


def test_lu_solves_several_right_hand_sides():
    A = np.array([[0.0, 2.0], [3.0, 1.0]])
    B = np.eye(2)
    assert np.allclose(lu_factor(A).solve(B) @ A, np.eye(2), atol=1e-14)


def test_singular_matrix_reports_column():
    with pytest.raises(SingularMatrix) as info:
        lu_factor([[1.0, 2.0], [2.0, 4.0]])
    assert info.value.context["column"] == 1


def test_extended_solve_is_accurate(extended):
    x = solve_linear([[3, 1], [1, 2]], [1, 0])
    assert abs(x[0] - extended.ratio(2, 5)) < mpmath.mpf(2) ** -120
    assert abs(x[1] + extended.ratio(1, 5)) < mpmath.mpf(2) ** -120


def test_cauchy_product():
    h = Jet([1.0, 1.0, 0.0])
    assert np.allclose((h * h).coefficients, [1.0, 2.0, 1.0])


def test_division_of_jets():
    t = Jet.variable(0.0, 5)
    inverse = 1 / (t + 2)
    expected = [(-1) ** j / 2 ** (j + 1) for j in range(6)]
    assert np.allclose(inverse.coefficients, expected, atol=1e-15)


def test_exp_recurrence():
    e = Jet.variable(0.0, 6).exp()
    assert np.allclose(e.coefficients, [1 / math.factorial(j) for j in range(7)], atol=1e-15)


def test_sin_cos_derivatives():
    t0 = 0.3
    s, c = Jet.variable(t0, 5).sin_cos()
    for j in range(6):
        assert s.derivative_value(j) == pytest.approx(math.sin(t0 + j * math.pi / 2), abs=1e-14)
        assert c.derivative_value(j) == pytest.approx(math.cos(t0 + j * math.pi / 2), abs=1e-14)


def test_scalar_times_vector_jet():
    t = Jet.variable(1.0, 2)
    u = Jet.stack([t, t * t])
    product = t * u
    assert product.shape == (2,)
    assert np.allclose(product.component(1).coefficients, [1.0, 3.0, 3.0])


def test_numpy_scalar_defers_to_jet():
    t = Jet.variable(2.0, 1)
    result = np.float64(3.0) * t
    assert isinstance(result, Jet)
    assert np.allclose(result.coefficients, [6.0, 3.0])


def test_order_mismatch():
    with pytest.raises(OrderMismatch):
        Jet.variable(0.0, 2) + Jet.variable(0.0, 3)
    with pytest.raises(OrderMismatch):
        Jet.variable(0.0, 2).truncate(4)


def test_derivative_lowers_order():
    t = Jet.variable(0.5, 3)
    cube = t * t * t
    derivative = cube.derivative()
    assert derivative.order == 2
    assert derivative.value == pytest.approx(3 * 0.25)


def test_jet_arith_operations():
    a, b = Jet.variable(1.0, 1), Jet.constant(2.0, 1)
    assert np.allclose(jet_arith("sub", a, b).coefficients, [-1.0, 1.0])
    assert np.allclose(jet_arith("scale", a, 3.0).coefficients, [3.0, 3.0])
    with pytest.raises(OrderMismatch):
        jet_arith("mul", a, 2.0)
    with pytest.raises(InvalidParameters):
        jet_arith("pow", a, b)
