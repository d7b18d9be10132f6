import json

import numpy as np
import pytest

from src.vtd.errors import ConfigError, SingularMass, UnknownProblem
from src.vtd.numkernel import Jet
from src.vtd.problem import (
    AffineLinearProblem,
    CustomProblemConfig,
    ZeroForcing,
    builtin,
    exact_solution,
    initial_jet,
    load_problem,
    resolve_problem,
)


@pytest.mark.parametrize("name", ["ex1", "ex2", "dahlquist", "dahlquist:-3.5"])
@pytest.mark.parametrize("t", [0.0, 0.3, 0.9])
def test_exact_solution_solves_the_equation(name, t):
    problem = builtin(name)
    time = Jet.variable(t, 1)
    u = problem.exact(time)
    lhs = problem.mass @ u.derivative_value(1)
    rhs = problem.rhs(time, u).value
    assert np.allclose(lhs, rhs, atol=1e-13)


@pytest.mark.parametrize("name", ["ex1", "ex2", "dahlquist:2"])
def test_initial_value_matches_exact_solution(name):
    problem = builtin(name)
    assert np.allclose(problem.exact(Jet.variable(problem.t0, 0)).value, problem.u0, atol=1e-15)


@pytest.mark.parametrize("name", ["ex1", "ex2", "dahlquist:-2"])
def test_initial_jet_matches_exact_jet(name):
    problem = builtin(name)
    jet = initial_jet(problem, 5)
    expected = problem.exact(Jet.variable(problem.t0, 5))
    assert np.allclose(jet.coefficients, expected.coefficients, atol=1e-12)


def test_builtin_intervals():
    assert float(builtin("ex1").t_end) == 32.0
    assert float(builtin("ex2").t_end) == 1.0
    assert builtin("ex2").is_affine
    assert not builtin("ex1").is_affine


def test_dahlquist_parameter():
    assert exact_solution("dahlquist:-2", 1.0)[0] == pytest.approx(np.exp(-2.0))
    assert exact_solution("dahlquist", 1.0)[0] == pytest.approx(np.exp(-1.0))


@pytest.mark.parametrize("name", ["ex3", "dahlquist:abc", ""])
def test_unknown_problem(name):
    with pytest.raises(UnknownProblem):
        builtin(name)


def test_singular_mass():
    with pytest.raises(SingularMass):
        AffineLinearProblem.build("bad", [[1, 1], [1, 1]], [[0, 0], [0, 0]], ZeroForcing(2), [0, 0], 0, 1)


def test_shape_and_interval_checks():
    with pytest.raises(ConfigError):
        AffineLinearProblem.build("bad", [[1, 0], [0, 1]], [[0, 0], [0, 0]], ZeroForcing(2), [0], 0, 1)
    with pytest.raises(ConfigError):
        AffineLinearProblem.build("bad", [[1]], [[0]], ZeroForcing(1), [0], 1, 1)


def test_with_interval_and_initial_value():
    problem = builtin("ex1").with_interval(t_end=4)
    assert float(problem.t_end) == 4.0
    assert float(problem.t0) == 0.0
    moved = problem.with_initial_value([1, 2])
    assert list(moved.u0) == [1.0, 2.0]
    assert resolve_problem("ex2", t_end=0.5).t_end == pytest.approx(0.5)


def _write(tmp_path, data):
    path = tmp_path / "problem.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def test_load_polynomial_problem(tmp_path):
    path = _write(tmp_path, {
        "name": "quadratic",
        "M": [[1]],
        "A": [[0]],
        "f": {"kind": "polynomial", "coefficients": [[1, 2]]},
        "u0": [0],
        "T": 2,
    })
    problem = load_problem(path)
    assert problem.name == "quadratic"
    assert float(problem.t_end) == 2.0
    assert problem.exact is None
    value = problem.rhs(Jet.variable(1.5, 0), Jet.constant([0.0], 0)).value
    assert value[0] == pytest.approx(4.0)


def test_load_exp_trig_problem(tmp_path):
    path = _write(tmp_path, {
        "M": [[1, 0], [0, 1]],
        "A": [[0, -1], [1, 0]],
        "f": {"kind": "exp_trig", "amplitude": [1, 2], "rate": [-1, 0], "frequency": [0, 3], "phase": [0, 0]},
        "u0": [1, 0],
        "t0": 1,
        "T": 10,
    })
    problem = resolve_problem(config_path=str(path))
    assert float(problem.t0) == 1.0
    assert float(problem.t_end) == 11.0
    forcing = problem.forcing(Jet.variable(0.5, 0)).value
    assert forcing[0] == pytest.approx(np.exp(-0.5))
    assert forcing[1] == pytest.approx(2 * np.cos(1.5))


@pytest.mark.parametrize("data", [
    {"M": [[1, 0]], "A": [[0]], "f": {"kind": "polynomial", "coefficients": [[1]]}, "u0": [0], "T": 1},
    {"M": [[1]], "A": [[0]], "f": {"kind": "polynomial", "coefficients": [[1]]}, "u0": [0], "T": -1},
    {"M": [[1]], "A": [[0]], "f": {"kind": "polynomial", "coefficients": [[1], [2]]}, "u0": [0], "T": 1},
    {"M": [[1]], "A": [[0]], "f": {"kind": "spline"}, "u0": [0], "T": 1},
])
def test_invalid_configs(tmp_path, data):
    with pytest.raises(ConfigError):
        load_problem(_write(tmp_path, data))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_problem(tmp_path / "absent.json")


def test_resolve_needs_a_source():
    with pytest.raises(ConfigError):
        resolve_problem()


def test_config_model_is_usable_directly():
    config = CustomProblemConfig(M=[[2]], A=[[1]], f={"kind": "polynomial", "coefficients": [[0]]}, u0=[1], T=1)
    assert config.build().mass[0, 0] == 2.0
