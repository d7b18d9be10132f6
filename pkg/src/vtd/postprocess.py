"""Lifting U in P_r to U~ in P_{r+1}: residual and jump corrections, cascade, reversal."""
from dataclasses import dataclass, field
from math import factorial
from typing import Literal, Optional

import numpy as np
from fastmcp.utilities.logging import get_logger
from pydantic import BaseModel, Field, field_validator

from src.vtd import numkernel as nk
from src.vtd.errors import ConfigError, InsufficientSmoothness, InvalidParameters, OrderMismatch
from src.vtd.numkernel import Jet
from src.vtd.polynomial import LocalPolynomial, TimeSource, theta_polynomial
from src.vtd.problem import AffineRhs, OdeProblem, PolynomialForcing, initial_jet
from src.vtd.quadrature import build_rule, interpolate_rule
from src.vtd.solver import MeshSolution, NewtonSettings, VtdConfig, march

logger = get_logger(__name__)



class PostprocessMode(BaseModel):
    variant: Literal["jump", "residual"] = Field("jump", description="Correction computed from jumps or from residuals")
    steps: int = Field(1, description="Number of postprocessing steps")

    @field_validator("steps")
    def validate_steps(cls, v):
        if v < 1:
            raise ValueError("At least one postprocessing step is required")
        return v


@dataclass(frozen=True)
class PostprocessHistory:
    """Input solution followed by every postprocessed level, with the per-step coefficients a_n."""
    levels: list = field(default_factory=list)
    corrections: list = field(default_factory=list)

    @property
    def solution(self) -> MeshSolution:
        return self.levels[-1]


def _check_degree(U: MeshSolution, r: int, k: int):
    if not 0 <= k <= r:
        raise InvalidParameters(f"Postprocessing needs 0 <= k <= r, got r={r}, k={k}", r=r, k=k)
    if U.degree != r:
        raise InvalidParameters(f"Solution has degree {U.degree}, expected {r}", r=r)


def _theta(r: int, k: int, piece: LocalPolynomial, normalization: str) -> LocalPolynomial:
    return theta_polynomial(r, k, piece.a, piece.b, build_rule(r, k).nodes, normalization)


def _residual_step(U, problem, r, k, rhs_override=None) -> tuple[MeshSolution, np.ndarray]:
    _check_degree(U, r, k)
    if rhs_override is not None and not problem.is_affine:
        raise ConfigError("A right-hand side override needs an affine-linear problem")
    p = k // 2
    pieces, corrections = [], []
    for n, piece in enumerate(U.pieces):
        rhs = problem.rhs if rhs_override is None else AffineRhs(problem.stiffness, PolynomialForcing(rhs_override[n]))
        u = piece.taylor(piece.b, p + 1)
        f = rhs(Jet.variable(piece.b, p), u.truncate(p))
        residual = factorial(p) * f.coefficients[p] - problem.mass @ u.derivative_value(p + 1)
        a_n = problem.solve_mass(residual)
        pieces.append(piece.raise_degree(r + 1) + _theta(r, k, piece, "right").times_vector(a_n))
        corrections.append(a_n)
    return MeshSolution(U.mesh, tuple(pieces), U.initial_value), np.array(corrections)


def _jump_step(U, problem, r, k) -> tuple[MeshSolution, np.ndarray]:
    _check_degree(U, r, k)
    p_left = (k - 1) // 2 + 1
    previous = initial_jet(problem, p_left).derivative_value(p_left)
    pieces, corrections = [], []
    for piece in U.pieces:
        a_n = piece.extrapolate(piece.a, p_left) - previous
        lifted = piece.raise_degree(r + 1) - _theta(r, k, piece, "left").times_vector(a_n)
        previous = lifted.extrapolate(lifted.b, p_left)
        pieces.append(lifted)
        corrections.append(a_n)
    return MeshSolution(U.mesh, tuple(pieces), U.initial_value), np.array(corrections)


def residual_correction(
    U: MeshSolution,
    problem: OdeProblem,
    r: int,
    k: int,
    rhs_override: Optional[list[LocalPolynomial]] = None,
) -> MeshSolution:
    """U~ = U + a_n theta_n with a_n the scaled endpoint residual of the floor(k/2)-th derivative.

    With ``rhs_override`` the residual is taken with respect to the modified
    right-hand side g - A U.
    """
    return _residual_step(U, problem, r, k, rhs_override)[0]


def jump_correction(U: MeshSolution, problem: OdeProblem, r: int, k: int) -> MeshSolution:
    """U~ = U - a~_n theta~_n from derivative jumps; sequential, no mass-matrix solve."""
    return _jump_step(U, problem, r, k)[0]


def multi_postprocess(U: MeshSolution, problem: OdeProblem, r: int, k: int, mode: PostprocessMode) -> PostprocessHistory:
    """Apply ``mode.steps`` corrections; step j+1 treats its input as a VTD(r+j, k+2j) solution."""
    if mode.steps > r + 1 - k:
        raise InvalidParameters(f"At most {r + 1 - k} postprocessing steps for r={r}, k={k}", steps=mode.steps)
    levels, corrections = [U], []
    for j in range(mode.steps):
        if mode.variant == "residual":
            current, a = _residual_step(levels[-1], problem, r + j, k + 2 * j)
        else:
            current, a = _jump_step(levels[-1], problem, r + j, k + 2 * j)
        levels.append(current)
        corrections.append(a)
        logger.debug(f"Postprocessing step {j + 1} ({mode.variant}) lifted degree to {r + j + 1}")
    return PostprocessHistory(levels, corrections)


def cascade_interpolant(f: TimeSource, r: int, k: int, depth: int, mesh) -> list[LocalPolynomial]:
    """Per interval g = I^{r+1,k+2} o ... o I^{r+depth,k+2 depth} f, innermost first."""
    if not 1 <= depth <= r - k:
        raise InvalidParameters(f"Cascade depth must lie in [1, {r - k}], got {depth}", depth=depth)
    required = (k + 2 * depth) // 2
    available = getattr(f, "max_order", None)
    if available is not None and available < required:
        raise InsufficientSmoothness(f"Forcing provides derivatives up to {available}, cascade needs {required}")
    mesh = nk.active().array(mesh)
    rules = [build_rule(r + j, k + 2 * j) for j in range(depth, 0, -1)]
    pieces = []
    for n in range(len(mesh) - 1):
        a, b = mesh[n], mesh[n + 1]
        g = f
        try:
            for rule in rules:
                g = interpolate_rule(g, rule, a, b)
        except OrderMismatch as e:
            raise InsufficientSmoothness("Forcing jets are too short for the cascade", interval=n + 1) from e
        pieces.append(g)
    return pieces


def cascade_march(
    cfg: VtdConfig,
    problem: OdeProblem,
    mesh,
    depth: int,
    settings: Optional[NewtonSettings] = None,
) -> MeshSolution:
    """Solve VTD(r,k)(g) with g the cascade interpolant of the forcing."""
    if not problem.is_affine:
        raise ConfigError("The interpolation cascade needs an affine-linear problem")
    g = cascade_interpolant(problem.forcing, cfg.r, cfg.k, depth, mesh)
    return march(cfg.model_copy(update={"rhs_override": g}), problem, mesh, settings)


def reverse_postprocess(U: MeshSolution, r: int, k: int) -> MeshSolution:
    """I^{r,k} applied on every interval."""
    rule = build_rule(r, k)
    pieces = tuple(interpolate_rule(piece, rule, piece.a, piece.b) for piece in U.pieces)
    return MeshSolution(U.mesh, pieces, U.initial_value)
