"""Collocation with multiple nodes, solved on a nodal basis.

The residual is built from pointwise ODE conditions only: no test functions and
no quadrature weights. Unknowns are the values of U~ at r+2 Chebyshev-Lobatto
points of the interval.
"""
from math import comb, factorial
from typing import Optional

import numpy as np
from fastmcp.utilities.logging import get_logger
from pydantic import BaseModel, Field, model_validator

from src.vtd import numkernel as nk
from src.vtd.errors import NewtonDiverged, SingularJacobian, VtdError
from src.vtd.numkernel import Jet
from src.vtd.polynomial import LocalPolynomial, from_taylor
from src.vtd.problem import OdeProblem, initial_jet
from src.vtd.quadrature import build_rule
from src.vtd.solver import MeshSolution, NewtonSettings, _validate_mesh, newton_solve

logger = get_logger(__name__)



class CollocationConfig(BaseModel):
    r: int = Field(..., description="Degree of the associated VTD method; the collocation polynomial has degree r+1")
    k: int = Field(..., description="Smoothness parameter, 0 <= k <= r")

    @model_validator(mode="after")
    def validate_parameters(self):
        if not 0 <= self.k <= self.r:
            raise ValueError(f"Collocation needs 0 <= k <= r, got r={self.r}, k={self.k}")
        return self

    def node_multiset(self) -> list[tuple[float, int]]:
        """(reference node, multiplicity) pairs; multiplicities sum to r+1."""
        rule = build_rule(self.r, self.k)
        nodes = []
        if self.k >= 1:
            nodes.append((-1.0, (self.k - 1) // 2 + 1))
        nodes.extend((float(x), 1) for x in rule.nodes)
        nodes.append((1.0, self.k // 2 + 1))
        return nodes


class _NodalPolynomial:
    """Degree-s polynomial on [a, b] represented by its values at Chebyshev-Lobatto points."""

    def __init__(self, a, b, degree: int):
        ctx = nk.active()
        self.a, self.b, self.degree = a, b, degree
        self.half = (b - a) / 2
        self.reference_nodes = ctx.array([-ctx.cos(ctx.pi * j / degree) for j in range(degree + 1)])
        vandermonde = np.array([[x ** m for m in range(degree + 1)] for x in self.reference_nodes])
        self.factors = nk.lu_factor(vandermonde)

    @property
    def times(self) -> np.ndarray:
        return self.a + self.half * (self.reference_nodes + 1)

    def monomials(self, values: np.ndarray) -> np.ndarray:
        return self.factors.solve(values)

    def taylor(self, monomials: np.ndarray, t, order: int) -> Jet:
        """Physical-time jet at t from reference monomial coefficients."""
        x0 = (2 * t - self.a - self.b) / (self.b - self.a)
        coefficients = nk.active().zeros((order + 1, monomials.shape[1]))
        for j in range(min(order, self.degree) + 1):
            acc = 0
            for m in range(j, self.degree + 1):
                acc = acc + comb(m, j) * monomials[m] * x0 ** (m - j)
            coefficients[j] = acc / self.half ** j
        return Jet(coefficients)


def _ode_rows(problem: OdeProblem, u: Jet, t, count: int) -> list:
    """M u^{(i+1)} - d^i/dt^i F(t, u) for i < count, read off one jet."""
    f = problem.rhs(Jet.variable(t, count - 1), u.truncate(count - 1))
    return [
        problem.mass @ u.derivative_value(i + 1) - factorial(i) * f.coefficients[i]
        for i in range(count)
    ]


def solve_collocation_local(
    cfg: CollocationConfig,
    problem: OdeProblem,
    interval: tuple,
    inherited_value,
    settings: Optional[NewtonSettings] = None,
    guess: Optional[LocalPolynomial] = None,
) -> LocalPolynomial:
    settings = settings or NewtonSettings()
    a, b = interval
    r, k, d = cfg.r, cfg.k, problem.dim
    basis = _NodalPolynomial(a, b, r + 1)
    interior = build_rule(r, k).mapped_nodes(a, b)
    right_count, left_count = k // 2 + 1, ((k - 1) // 2 + 1 if k >= 1 else 0)

    def residual(x):
        monomials = basis.monomials(x.reshape(r + 2, d))
        rows = [basis.taylor(monomials, a, 0).value - inherited_value]
        rows.extend(_ode_rows(problem, basis.taylor(monomials, b, right_count), b, right_count))
        if left_count:
            rows.extend(_ode_rows(problem, basis.taylor(monomials, a, left_count), a, left_count))
        for t in interior:
            rows.extend(_ode_rows(problem, basis.taylor(monomials, t, 1), t, 1))
        return np.concatenate(rows)

    if guess is not None:
        start = np.array([guess.extrapolate(t) for t in basis.times])
    else:
        start = np.array([inherited_value for _ in basis.times])
    try:
        x, iterations = newton_solve(
            residual, start.ravel(), settings, affine=problem.is_affine and settings.jacobian == "auto"
        )
    except (NewtonDiverged, SingularJacobian):
        if guess is None or problem.is_affine:
            raise
        return solve_collocation_local(cfg, problem, interval, inherited_value, settings)
    logger.debug(f"Collocation on [{float(a)}, {float(b)}] converged in {iterations} iteration(s)")
    monomials = basis.monomials(x.reshape(r + 2, d))
    return from_taylor(a, b, basis.taylor(monomials, a, r + 1), r + 1)


def march_collocation(
    cfg: CollocationConfig,
    problem: OdeProblem,
    mesh,
    settings: Optional[NewtonSettings] = None,
) -> MeshSolution:
    mesh = _validate_mesh(problem, mesh)
    guess = from_taylor(mesh[0], mesh[1], initial_jet(problem, cfg.r + 1), cfg.r + 1)
    inherited = problem.u0
    pieces = []
    for n in range(len(mesh) - 1):
        a, b = mesh[n], mesh[n + 1]
        try:
            piece = solve_collocation_local(cfg, problem, (a, b), inherited, settings, guess)
        except VtdError as e:
            e.context.setdefault("interval", n + 1)
            raise
        pieces.append(piece)
        inherited = piece.extrapolate(b)
        guess = piece
    return MeshSolution(mesh, tuple(pieces), problem.u0)
