import numpy as np
import pytest
from pydantic import ValidationError

from src.vtd import numkernel as nk
from src.vtd.analysis import pade_exp, stability_reference_degrees
from src.vtd.errors import ConfigError, InvalidMesh, InvalidParameters, NewtonDiverged, SingularSystem, SolverError
from src.vtd.numkernel import Jet
from src.vtd.polynomial import LocalPolynomial
from src.vtd.problem import CustomProblemConfig, builtin
from src.vtd.solver import (
    NewtonSettings,
    VtdConfig,
    check_solution,
    local_rhs,
    local_system_size,
    march,
    newton_solve,
    stability_function,
    uniform_mesh,
)


def _quadratic_problem():
    """u = t + t^2 on (0, 2)."""
    return CustomProblemConfig(
        name="quadratic", M=[[1]], A=[[0]], f={"kind": "polynomial", "coefficients": [[1, 2]]}, u0=[0], T=2,
    ).build()


def test_implicit_euler_steps():
    problem = builtin("dahlquist:-1")
    sol = march(VtdConfig(r=0, k=0), problem, uniform_mesh(problem, 2))
    assert sol.endpoint_values()[-1][0] == pytest.approx(4 / 9, rel=1e-14)


def test_crank_nicolson_step():
    assert stability_function(VtdConfig(r=1, k=1), -1).real == pytest.approx(1 / 3, rel=1e-14)


@pytest.mark.parametrize("r,k", [(0, 0), (1, 0), (2, 1), (2, 2), (3, 2), (3, 3), (4, 1)])
@pytest.mark.parametrize("z", [-1, -10, 2j, -3 + 4j])
def test_stability_function_is_pade(r, k, z):
    L, M = stability_reference_degrees(r, k)
    assert abs(stability_function(VtdConfig(r=r, k=k), z) - pade_exp(L, M, z)) <= 1e-10 * max(1, abs(pade_exp(L, M, z)))


def test_stability_pole():
    with pytest.raises(SingularSystem):
        stability_function(VtdConfig(r=0, k=0), 1)


@pytest.mark.parametrize("r,k,size", [(3, 0, 4), (3, 1, 3), (3, 2, 3), (3, 3, 2), (3, 4, 2), (0, 0, 1)])
def test_local_system_size(r, k, size):
    assert local_system_size(r, k) == size


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_polynomial_solution_is_reproduced(k):
    problem = _quadratic_problem()
    cfg = VtdConfig(r=2, k=k)
    sol = march(cfg, problem, uniform_mesh(problem, 4))
    for t in np.linspace(0, 2, 9):
        assert sol(t)[0] == pytest.approx(t + t * t, abs=1e-12)
    assert check_solution(cfg, problem, sol) < 1e-10


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_marched_solution_satisfies_local_problems(k):
    problem = builtin("ex1").with_interval(t_end=2)
    cfg = VtdConfig(r=3, k=k)
    sol = march(cfg, problem, uniform_mesh(problem, 8))
    assert check_solution(cfg, problem, sol) < 1e-10


def test_nonlinear_accuracy():
    problem = builtin("ex1").with_interval(t_end=4)
    sol = march(VtdConfig(r=3, k=0), problem, uniform_mesh(problem, 32))
    exact = problem.exact(Jet.variable(4.0, 0)).value
    assert np.max(np.abs(sol.endpoint_values()[-1] - exact)) < 1e-5


def test_exact_integrator_matches_associated_rule_for_linear_problems():
    problem = builtin("dahlquist:-2")
    mesh = uniform_mesh(problem, 4)
    assoc = march(VtdConfig(r=2, k=0), problem, mesh)
    exact = march(VtdConfig(r=2, k=0, integrator="exact"), problem, mesh)
    assert np.allclose(assoc.endpoint_values(), exact.endpoint_values(), atol=1e-13)


def test_continuity_for_positive_k():
    problem = builtin("ex1").with_interval(t_end=2)
    sol = march(VtdConfig(r=3, k=3), problem, uniform_mesh(problem, 8))
    assert np.max(np.abs(sol.jumps())) < 1e-10
    assert np.max(np.abs(sol.jumps(1))) < 1e-8


def test_dg_solution_jumps():
    problem = builtin("ex1").with_interval(t_end=2)
    sol = march(VtdConfig(r=1, k=0), problem, uniform_mesh(problem, 8))
    assert np.max(np.abs(sol.jumps())) > 1e-8


def test_samples_and_evaluation():
    problem = builtin("dahlquist")
    sol = march(VtdConfig(r=1, k=1), problem, uniform_mesh(problem, 4))
    times, values = sol.samples(3)
    assert len(times) == 12
    assert values.shape == (12, 1)
    assert float(times[-1]) == pytest.approx(1.0)
    assert sol(0.25)[0] == pytest.approx(sol.endpoint_values()[0][0])
    with pytest.raises(InvalidParameters):
        sol.samples(1)


@pytest.mark.parametrize("mesh", [[0.0, 0.5], [0.0, 0.6, 0.4, 1.0], [0.0]])
def test_invalid_meshes(mesh):
    problem = builtin("dahlquist")
    with pytest.raises(InvalidMesh):
        march(VtdConfig(r=1, k=0), problem, mesh)


def test_uniform_mesh():
    problem = builtin("ex2")
    assert np.allclose(uniform_mesh(problem, 4), [0, 0.25, 0.5, 0.75, 1])
    with pytest.raises(InvalidMesh):
        uniform_mesh(problem, 0)


def test_override_length_is_checked():
    problem = builtin("ex2")
    piece = LocalPolynomial(0.0, 1.0, nk.active().zeros((3, 2)))
    with pytest.raises(InvalidMesh):
        march(VtdConfig(r=2, k=0, rhs_override=[piece]), problem, uniform_mesh(problem, 2))


def test_override_needs_affine_problem():
    piece = LocalPolynomial(0.0, 1.0, nk.active().zeros((3, 2)))
    with pytest.raises(ConfigError):
        local_rhs(builtin("ex1"), VtdConfig(r=2, k=0, rhs_override=[piece]), 0)


@pytest.mark.parametrize("values", [
    {"r": 1, "k": 3},
    {"r": -1, "k": 0},
    {"r": 2, "k": 0, "integrator": "gauss"},
    {"r": 2, "k": 0, "integrator": "q2,3"},
])
def test_config_validation(values):
    with pytest.raises(ValidationError):
        VtdConfig(**values)


def test_named_rule_integrator():
    cfg = VtdConfig(r=3, k=1, integrator="q2,0")
    rule = cfg.quadrature_rule()
    assert (rule.r, rule.k) == (2, 0)
    assert VtdConfig(r=2, k=3).quadrature_rule() is None
    assert VtdConfig(r=2, k=0, integrator="exact").gauss_points() == 5


def test_newton_settings():
    eps = nk.active().eps
    assert NewtonSettings().resolved() == pytest.approx((1e4 * eps, 1e4 * eps, 1e3 * eps))
    assert NewtonSettings(abs_tol=1e-8).resolved()[0] == 1e-8
    with pytest.raises(ValidationError):
        NewtonSettings(rel_tol=0)
    with pytest.raises(ValidationError):
        NewtonSettings(max_iter=0)


def test_finite_difference_jacobian_on_affine_problem():
    problem = builtin("dahlquist:-1")
    mesh = uniform_mesh(problem, 2)
    auto = march(VtdConfig(r=2, k=1), problem, mesh)
    fd = march(VtdConfig(r=2, k=1), problem, mesh, NewtonSettings(jacobian="finite_difference"))
    assert np.allclose(auto.endpoint_values(), fd.endpoint_values(), atol=1e-10)


def test_affine_newton_solves_linear_map():
    x, iterations = newton_solve(lambda x: 3 * x - 6, np.array([0.0]), NewtonSettings(), affine=True)
    assert x[0] == pytest.approx(2.0, rel=1e-15)
    assert iterations <= 2


def test_affine_newton_checks_the_residual():
    with pytest.raises(NewtonDiverged) as info:
        newton_solve(lambda x: x * x * x - 2, np.array([1.0]), NewtonSettings(), affine=True)
    assert isinstance(info.value, SolverError)
    assert info.value.context["residual"] > 1e-3


def test_extended_precision_march(extended):
    problem = builtin("dahlquist:-1")
    sol = march(VtdConfig(r=0, k=0), problem, uniform_mesh(problem, 2))
    value = sol.endpoint_values()[-1][0]
    assert abs(value - nk.active().ratio(4, 9)) < 1e-30
