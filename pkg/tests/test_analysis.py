import math
from dataclasses import replace

import numpy as np
import polars as pl
import pytest

from src.vtd import numkernel as nk
from src.vtd.analysis import (
    error_norms,
    eoc,
    pade_exp,
    run_convergence_study,
    stability_reference_degrees,
    theoretical_orders,
)
from src.vtd.errors import ConfigError, InvalidParameters, NonPositiveError
from src.vtd.numkernel import Jet
from src.vtd.polynomial import LocalPolynomial
from src.vtd.postprocess import PostprocessMode
from src.vtd.problem import CustomProblemConfig, builtin
from src.vtd.quadrature import build_rule
from src.vtd.solver import MeshSolution, VtdConfig, march, uniform_mesh


def _quadratic_problem():
    problem = CustomProblemConfig(
        name="quadratic", M=[[1]], A=[[0]], f={"kind": "polynomial", "coefficients": [[1, 2]]}, u0=[0], T=2,
    ).build()
    return replace(problem, exact=lambda t: Jet.stack([t + t * t]))


def test_eoc():
    assert eoc(1.0, 0.125) == pytest.approx(3.0)
    assert eoc(3.0587e-37, 3.7333e-41) == pytest.approx(13.0, abs=0.01)
    with pytest.raises(NonPositiveError):
        eoc(0.0, 1e-3)
    with pytest.raises(NonPositiveError):
        eoc(1e-3, -1.0)


def test_pade_approximants():
    z = -0.7 + 0.2j
    assert pade_exp(0, 1, z) == pytest.approx(1 / (1 - z))
    assert pade_exp(1, 1, z) == pytest.approx((1 + z / 2) / (1 - z / 2))
    assert pade_exp(1, 2, z) == pytest.approx((1 + z / 3) / (1 - 2 * z / 3 + z * z / 6))
    assert pade_exp(6, 6, 0.1) == pytest.approx(np.exp(0.1), rel=1e-14)
    with pytest.raises(InvalidParameters):
        pade_exp(-1, 0, z)


@pytest.mark.parametrize("r,k,degrees", [(0, 0, (0, 1)), (2, 0, (2, 3)), (2, 1, (2, 2)), (3, 2, (2, 3)), (3, 3, (2, 2))])
def test_stability_reference_degrees(r, k, degrees):
    assert stability_reference_degrees(r, k) == degrees


def test_theoretical_orders():
    assert theoretical_orders(2, 0) == {
        "l2": 3.0, "linf_mesh": 5.0, "l2_deriv": 2.0, "linf_mesh_deriv": 2.0, "linf_nodes": 4.0,
    }
    assert theoretical_orders(2, 0, steps=1) == {
        "l2": 4.0, "linf_mesh": 5.0, "l2_deriv": 3.0, "linf_mesh_deriv": 5.0, "linf_nodes": 4.0,
    }
    assert theoretical_orders(2, 1)["linf_mesh_deriv"] == 4.0
    assert theoretical_orders(6, 5)["linf_mesh_deriv"] == 8.0
    assert math.isnan(theoretical_orders(3, 3)["linf_nodes"])
    assert math.isnan(theoretical_orders(3, 0, steps=2)["linf_nodes"])
    assert theoretical_orders(6, 5)["linf_mesh"] == 8.0
    assert theoretical_orders(6, 6)["l2"] == 7.0
    assert theoretical_orders(3, 2)["linf_mesh_deriv"] == 5.0
    orders = theoretical_orders(3, 0, steps=2)
    assert math.isnan(orders["l2"]) and math.isnan(orders["l2_deriv"])
    assert theoretical_orders(3, 0, steps=3, cascade=2)["l2_deriv"] == 6.0
    assert theoretical_orders(2, 0, steps=3, cascade=2)["l2"] == 5.0


def test_norms_vanish_for_exact_polynomial():
    problem = _quadratic_problem()
    sol = march(VtdConfig(r=2, k=1), problem, uniform_mesh(problem, 4))
    norms = error_norms(sol, problem.exact, nodes=build_rule(2, 1))
    for value in norms.to_dict().values():
        assert value < 1e-12
    assert "linf_nodes" in norms.to_dict()


def test_norms_of_constant_offset():
    mesh = nk.active().array([0.0, 1.0, 3.0])
    pieces = tuple(LocalPolynomial(mesh[n], mesh[n + 1], np.array([[0.5]])) for n in range(2))
    sol = MeshSolution(mesh, pieces, np.array([0.0]))
    norms = error_norms(sol, lambda t: Jet.stack([t * 0.0]))
    assert norms.l2 == pytest.approx(0.5 * math.sqrt(3.0), rel=1e-13)
    assert norms.linf_mesh == pytest.approx(0.5)
    assert norms.l2_deriv == pytest.approx(0.0, abs=1e-15)
    assert norms.linf_nodes is None
    assert "linf_nodes" not in norms.to_dict()


def test_report_layout():
    problem = builtin("ex2")
    report = run_convergence_study(
        problem, VtdConfig(r=1, k=0), [4, 8, 16], postprocess=PostprocessMode(steps=2),
    )
    assert report.max_steps == 2
    assert report.errors.height == 9
    assert report.eoc.height == 6
    table = report.summary_table()
    assert table["N"].to_list() == ["4", "8", "16", "eoc", "theo"]
    assert table.columns == ["N", "e_L2", "e_linf", "pp_e_L2", "de_L2", "de_linf", "pp_de_L2", "pp_de_linf"]
    assert table.filter(pl.col("N") == "theo")["e_L2"][0] == 2.0
    assert math.isnan(table.filter(pl.col("N") == "theo")["pp_e_L2"][0])
    data = report.to_dict()
    assert data["variant"] == "jump"
    assert data["theory"][2]["l2"] is None
    assert len(data["errors"]) == 9


def test_report_without_postprocessing():
    problem = builtin("dahlquist")
    report = run_convergence_study(problem, VtdConfig(r=1, k=1), [2, 4, 8])
    assert report.max_steps == 0
    assert report.summary_table().columns == ["N", "e_L2", "e_linf", "de_L2", "de_linf"]
    assert report.final_eoc("linf_mesh") == pytest.approx(2.0, abs=0.15)
    assert math.isnan(report.final_eoc("l2", steps=3))


def test_round_off_errors_give_no_eoc():
    report = run_convergence_study(_quadratic_problem(), VtdConfig(r=2, k=0), [2, 4])
    assert all(math.isnan(value) for value in report.eoc["l2"].to_list())
    assert report.to_dict()["eoc"][0]["l2"] is None


def test_collocation_study_uses_shifted_theory():
    problem = builtin("ex2")
    report = run_convergence_study(problem, VtdConfig(r=1, k=0), [4, 8], method="collocation")
    assert report.method == "collocation"
    assert report.theory["l2"][0] == 3.0


@pytest.mark.parametrize("n_list", [[], [8, 4], [0, 2]])
def test_invalid_n_lists(n_list):
    with pytest.raises(InvalidParameters):
        run_convergence_study(builtin("ex2"), VtdConfig(r=1, k=0), n_list)


def test_study_needs_exact_solution():
    problem = CustomProblemConfig(M=[[1]], A=[[0]], f={"kind": "polynomial", "coefficients": [[1]]}, u0=[0], T=1).build()
    with pytest.raises(ConfigError):
        run_convergence_study(problem, VtdConfig(r=1, k=0), [2, 4])


def test_collocation_study_rejects_postprocessing():
    with pytest.raises(ConfigError):
        run_convergence_study(
            builtin("ex2"), VtdConfig(r=1, k=0), [2, 4], postprocess=PostprocessMode(), method="collocation",
        )


def test_parallel_study_matches_serial():
    problem = builtin("ex2")
    cfg = VtdConfig(r=2, k=1)
    serial = run_convergence_study(problem, cfg, [4, 8], postprocess=PostprocessMode())
    parallel = run_convergence_study(problem, cfg, [4, 8], postprocess=PostprocessMode(), workers=2)
    assert serial.errors.equals(parallel.errors)


@pytest.mark.slow
def test_dg_orders_on_nonlinear_problem():
    report = run_convergence_study(
        builtin("ex1"), VtdConfig(r=2, k=0), [32, 64, 128, 256, 512], postprocess=PostprocessMode(),
    )
    assert report.final_eoc("l2") == pytest.approx(3.0, abs=0.2)
    assert report.final_eoc("linf_mesh") == pytest.approx(5.0, abs=0.3)
    assert report.final_eoc("l2_deriv") == pytest.approx(2.0, abs=0.25)
    assert report.final_eoc("l2", steps=1) == pytest.approx(4.0, abs=0.2)
    assert report.final_eoc("l2_deriv", steps=1) == pytest.approx(3.0, abs=0.2)
    assert report.final_eoc("linf_mesh_deriv", steps=1) == pytest.approx(5.0, abs=0.3)
    assert report.final_eoc("linf_nodes") == pytest.approx(4.0, abs=0.3)
    assert report.final_eoc("linf_nodes", steps=1) == pytest.approx(4.0, abs=0.3)


@pytest.mark.slow
def test_full_smoothness_orders_on_nonlinear_problem():
    report = run_convergence_study(
        builtin("ex1"), VtdConfig(r=3, k=3), [32, 64, 128, 256, 512], postprocess=PostprocessMode(),
    )
    assert report.final_eoc("l2") == pytest.approx(4.0, abs=0.2)
    assert report.final_eoc("linf_mesh") == pytest.approx(4.0, abs=0.3)
    assert report.final_eoc("l2", steps=1) == pytest.approx(4.0, abs=0.3)
    assert report.final_eoc("l2_deriv") == pytest.approx(3.0, abs=0.25)
    assert report.final_eoc("l2_deriv", steps=1) == pytest.approx(4.0, abs=0.25)
    assert "linf_nodes" not in report.errors.columns


@pytest.mark.slow
def test_cascade_lifts_derivative_order_every_step():
    report = run_convergence_study(
        builtin("ex2"), VtdConfig(r=3, k=0), [8, 16, 32, 64],
        postprocess=PostprocessMode(steps=3), cascade=2,
    )
    for steps, expected in enumerate([3.0, 4.0, 5.0, 6.0]):
        assert report.final_eoc("l2_deriv", steps) == pytest.approx(expected, abs=0.3)


@pytest.mark.slow
def test_multi_step_residual_postprocessing_gains_order():
    report = run_convergence_study(
        builtin("ex2"), VtdConfig(r=4, k=3), [8, 16, 32, 64],
        postprocess=PostprocessMode(variant="residual", steps=2),
    )
    assert report.final_eoc("l2_deriv", 1) >= report.final_eoc("l2_deriv", 0) + 0.7
    assert report.final_eoc("l2_deriv", 2) >= report.final_eoc("l2_deriv", 0) + 1.4
    assert report.final_eoc("l2_deriv", 2) >= report.final_eoc("l2_deriv", 1) + 0.7


def test_interior_node_errors_are_tabulated():
    report = run_convergence_study(builtin("ex2"), VtdConfig(r=2, k=0), [4, 8], postprocess=PostprocessMode())
    assert "linf_nodes" in report.errors.columns
    assert "linf_nodes" in report.eoc.columns
    assert report.errors["linf_nodes"].min() > 0
    assert report.theory["linf_nodes"].to_list() == [4.0, 4.0]


@pytest.mark.slow
def test_cgp_derivative_superconverges_at_mesh_points():
    report = run_convergence_study(
        builtin("ex1"), VtdConfig(r=2, k=1), [32, 64, 128, 256, 512], postprocess=PostprocessMode(),
    )
    assert report.final_eoc("linf_mesh_deriv") == pytest.approx(4.0, abs=0.3)
    assert report.final_eoc("linf_mesh_deriv", steps=1) == pytest.approx(4.0, abs=0.3)
    assert report.summary_table().filter(pl.col("N") == "theo")["de_linf"][0] == 4.0


@pytest.mark.slow
def test_multi_step_jump_postprocessing_stagnates_for_odd_k():
    report = run_convergence_study(
        builtin("ex2"), VtdConfig(r=4, k=3), [8, 16, 32, 64],
        postprocess=PostprocessMode(variant="jump", steps=2),
    )
    assert report.final_eoc("l2_deriv", 1) >= report.final_eoc("l2_deriv", 0) + 0.7
    assert report.final_eoc("l2_deriv", 2) <= report.final_eoc("l2_deriv", 1) + 0.3
