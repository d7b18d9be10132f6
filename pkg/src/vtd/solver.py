"""Local VTD(r,k) problems, time marching and the stability function."""
import math
import re
from dataclasses import dataclass
from math import factorial
from typing import Callable, Literal, Optional

import numpy as np
from fastmcp.utilities.logging import get_logger
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.vtd import numkernel as nk
from src.vtd.errors import (
    ConfigError,
    InvalidMesh,
    InvalidParameters,
    NewtonDiverged,
    OutOfInterval,
    SingularJacobian,
    SingularMatrix,
    SingularSystem,
    VtdError,
)
from src.vtd.numkernel import Jet
from src.vtd.polynomial import LocalPolynomial, from_taylor, legendre_table
from src.vtd.problem import AffineLinearProblem, AffineRhs, OdeProblem, PolynomialForcing, ZeroForcing, initial_jet
from src.vtd.quadrature import VtdQuadrature, build_rule, gauss_legendre

logger = get_logger(__name__)

_RULE_PATTERN = re.compile(r"^q(\d+),(\d+)$")



class VtdConfig(BaseModel):
    """Method descriptor: trial space P_r, test space P_{r-k}, and the integrator."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    r: int = Field(..., description="Trial polynomial degree")
    k: int = Field(..., description="Number of endpoint conditions, 0 <= k <= r+1")
    integrator: str = Field("assoc", description="'assoc' for Q^{r,k}, 'exact' for Gauss-Legendre, or 'q<rho>,<kappa>'")
    exact_degree_estimate: Optional[int] = Field(None, description="Degree guess for f in exact mode, default r")
    rhs_override: Optional[list[LocalPolynomial]] = Field(None, description="Per-interval polynomial replacing f")

    @field_validator("r", "k")
    def validate_non_negative(cls, v):
        if v < 0:
            raise ValueError("r and k must be non-negative")
        return v

    @field_validator("integrator")
    def validate_integrator(cls, v):
        if v in ("assoc", "exact"):
            return v
        match = _RULE_PATTERN.match(v)
        if not match:
            raise ValueError("Integrator must be 'assoc', 'exact' or 'q<rho>,<kappa>'")
        rho, kappa = int(match.group(1)), int(match.group(2))
        if kappa > rho:
            raise ValueError(f"Rule Q^({rho},{kappa}) needs kappa <= rho")
        return v

    @model_validator(mode="after")
    def validate_smoothness(self):
        if self.k > self.r + 1:
            raise ValueError(f"k={self.k} exceeds r+1={self.r + 1}")
        return self

    @property
    def has_variational_block(self) -> bool:
        return self.k <= self.r

    def quadrature_rule(self) -> Optional[VtdQuadrature]:
        """Rule used for the variational block, None for Gauss-Legendre or an empty block."""
        if not self.has_variational_block or self.integrator == "exact":
            return None
        if self.integrator == "assoc":
            return build_rule(self.r, self.k)
        match = _RULE_PATTERN.match(self.integrator)
        return build_rule(int(match.group(1)), int(match.group(2)))

    def gauss_points(self) -> int:
        degree = self.r if self.exact_degree_estimate is None else self.exact_degree_estimate
        return math.ceil((2 * self.r + degree) / 2) + 2


class NewtonSettings(BaseModel):
    """Stopping rule ||R|| <= abs_tol + rel_tol ||R_0|| or ||delta|| <= step_tol (1 + ||x||)."""
    abs_tol: Optional[float] = Field(None, description="Absolute residual tolerance, default 1e4 eps")
    rel_tol: Optional[float] = Field(None, description="Tolerance relative to the first residual, default 1e4 eps")
    step_tol: Optional[float] = Field(None, description="Relative update size that ends the iteration, default 1e3 eps")
    max_iter: int = Field(50, description="Maximum number of Newton iterations")
    jacobian: Literal["auto", "finite_difference"] = Field(
        "auto", description="'auto' uses the exact Jacobian for affine-linear problems"
    )

    @field_validator("abs_tol", "rel_tol", "step_tol")
    def validate_tolerance(cls, v):
        if v is not None and v <= 0:
            raise ValueError("Tolerances must be positive")
        return v

    @field_validator("max_iter")
    def validate_max_iter(cls, v):
        if v < 1:
            raise ValueError("max_iter must be at least 1")
        return v

    def resolved(self) -> tuple:
        eps = nk.active().eps
        return (
            eps * 10 ** 4 if self.abs_tol is None else self.abs_tol,
            eps * 10 ** 4 if self.rel_tol is None else self.rel_tol,
            eps * 10 ** 3 if self.step_tol is None else self.step_tol,
        )


@dataclass(frozen=True)
class MeshSolution:
    """Piecewise polynomial on t_0 < ... < t_N with the left limit U(t_0^-) = u0."""
    mesh: np.ndarray
    pieces: tuple
    initial_value: np.ndarray

    @property
    def N(self) -> int:
        return len(self.pieces)

    @property
    def degree(self) -> int:
        return self.pieces[0].degree

    @property
    def dim(self) -> int:
        return self.pieces[0].dim

    def piece_index(self, t) -> int:
        grid = nk.NumericContext.to_float(self.mesh)
        tf = float(t)
        if not self.pieces[0].contains(t) and tf < grid[0] or not self.pieces[-1].contains(t) and tf > grid[-1]:
            raise OutOfInterval(f"t={tf} outside the mesh [{grid[0]}, {grid[-1]}]", t=tf)
        index = int(np.searchsorted(grid, tf, side="left")) - 1
        return min(max(index, 0), self.N - 1)

    def __call__(self, t, deriv: int = 0) -> np.ndarray:
        """Value at t; at interior mesh points this is the left limit."""
        return self.pieces[self.piece_index(t)](t, deriv)

    def endpoint_values(self, deriv: int = 0) -> np.ndarray:
        return np.array([p.extrapolate(p.b, deriv) for p in self.pieces])

    def start_values(self, deriv: int = 0) -> np.ndarray:
        return np.array([p.extrapolate(p.a, deriv) for p in self.pieces])

    def jumps(self, deriv: int = 0) -> np.ndarray:
        """U^{(deriv)}(t_n^+) - U^{(deriv)}(t_n^-) at the interior mesh points."""
        return self.start_values(deriv)[1:] - self.endpoint_values(deriv)[:-1]

    def samples(self, points_per_interval: int = 2) -> tuple[list, np.ndarray]:
        """Evaluate every piece at equidistant points including both of its endpoints."""
        if points_per_interval < 2:
            raise InvalidParameters("Sampling needs at least the two endpoints of each interval")
        times, values = [], []
        for p in self.pieces:
            for j in range(points_per_interval):
                t = p.a + (p.b - p.a) * j / (points_per_interval - 1)
                times.append(t)
                values.append(p.extrapolate(t))
        return times, np.array(values)

    def derivative(self, j: int, initial_value) -> "MeshSolution":
        return MeshSolution(self.mesh, tuple(p.derivative(j) for p in self.pieces), nk.active().array(initial_value))


def uniform_mesh(problem: OdeProblem, N: int) -> np.ndarray:
    if N < 1:
        raise InvalidMesh(f"Mesh needs at least one interval, got N={N}", N=N)
    ctx = nk.active()
    return ctx.array([problem.t0 + (problem.t_end - problem.t0) * ctx.ratio(i, N) for i in range(N + 1)])


def _validate_mesh(problem: OdeProblem, mesh) -> np.ndarray:
    mesh = nk.active().array(mesh)
    if mesh.ndim != 1 or len(mesh) < 2:
        raise InvalidMesh("Mesh needs at least two points")
    if any(mesh[i + 1] <= mesh[i] for i in range(len(mesh) - 1)):
        raise InvalidMesh("Mesh points must be strictly increasing")
    slack = 1e-12 * max(1.0, abs(float(problem.t_end)))
    if abs(float(mesh[0] - problem.t0)) > slack or abs(float(mesh[-1] - problem.t_end)) > slack:
        raise InvalidMesh(
            f"Mesh [{float(mesh[0])}, {float(mesh[-1])}] does not cover "
            f"({float(problem.t0)}, {float(problem.t_end)})"
        )
    return mesh


def local_system_size(r: int, k: int) -> int:
    """Blocks left after removing the conditions fixed by inherited data."""
    return r - (k - 1) // 2


def local_rhs(problem: OdeProblem, cfg: VtdConfig, n: int) -> Callable[[Jet, Jet], Jet]:
    """F on interval n, with f replaced by the override polynomial when one is configured."""
    if cfg.rhs_override is None:
        return problem.rhs
    if not problem.is_affine:
        raise ConfigError("A right-hand side override needs an affine-linear problem")
    return AffineRhs(problem.stiffness, PolynomialForcing(cfg.rhs_override[n]))


def _defect(U: LocalPolynomial, rhs, mass, t, order: int) -> Jet:
    """Jet of M U' - F(t, U) at t."""
    u = U.taylor(t, order + 1)
    return u.derivative().matvec(mass) - rhs(Jet.variable(t, order), u.truncate(order))


def _endpoint_integral(defect: Jet, test_table, weights, half, count: int) -> list:
    """sum_i w_i d^i/dx^i (g phi_m) at one endpoint, for every test index m."""
    contributions = []
    for m in range(count):
        total = 0
        for i, w in enumerate(weights):
            product = 0
            for l in range(i + 1):
                product = product + defect.coefficients[l] * half ** l * test_table[i - l][m] / factorial(i - l)
            total = total + w * factorial(i) * product
        contributions.append(total)
    return contributions


def assemble_local_residual(
    cfg: VtdConfig,
    problem: OdeProblem,
    interval: tuple,
    inherited_value,
    U: LocalPolynomial,
    rhs: Optional[Callable] = None,
) -> np.ndarray:
    """Residual blocks in order: continuity, right-end ODE, left-end ODE, variational.

    Variational rows are scaled by 2/tau and the i-th point condition by
    (tau/2)^i, so every block lives on the reference interval.
    """
    a, b = interval
    r, k = cfg.r, cfg.k
    half = (b - a) / 2
    mass = problem.mass
    rhs = rhs or problem.rhs
    right_conditions, left_conditions = k // 2, max((k - 1) // 2, 0)

    rule = cfg.quadrature_rule()
    variational = cfg.has_variational_block
    right_order = max(right_conditions - 1, rule.right_orders - 1 if rule else -1)
    left_order = max(left_conditions - 1, rule.left_orders - 1 if rule else -1)
    defect_b = _defect(U, rhs, mass, b, right_order) if right_order >= 0 else None
    defect_a = _defect(U, rhs, mass, a, left_order) if left_order >= 0 else None

    blocks = []
    if k >= 1:
        blocks.append(U.extrapolate(a) - inherited_value)
    for i in range(right_conditions):
        blocks.append(factorial(i) * defect_b.coefficients[i] * half ** i)
    for i in range(left_conditions):
        blocks.append(factorial(i) * defect_a.coefficients[i] * half ** i)

    if variational:
        ctx = nk.active()
        count = r - k + 1
        terms = [0] * count
        if rule is not None:
            if rule.left_orders:
                table = legendre_table(ctx.scalar(-1), count - 1, rule.left_orders - 1)
                left = _endpoint_integral(defect_a, table, rule.left_weights, half, count)
                terms = [x + y for x, y in zip(terms, left)]
            table = legendre_table(ctx.scalar(1), count - 1, rule.right_orders - 1)
            right = _endpoint_integral(defect_b, table, rule.right_weights, half, count)
            terms = [x + y for x, y in zip(terms, right)]
            nodes, weights = rule.nodes, rule.interior_weights
        else:
            nodes, weights = gauss_legendre(cfg.gauss_points())
        if len(nodes):
            tests = legendre_table(nodes, count - 1, 0)[0]
            for q, (x, w) in enumerate(zip(nodes, weights)):
                g = _defect(U, rhs, mass, a + half * (1 + x), 0).value
                terms = [terms[m] + w * tests[m][q] * g for m in range(count)]
        if k == 0:
            jump = mass @ (U.extrapolate(a) - inherited_value)
            terms = [terms[m] + (-1) ** m * jump / half for m in range(count)]
        blocks.extend(terms)
    return np.concatenate([np.atleast_1d(block) for block in blocks])


def _jacobian(residual, x: np.ndarray, base: np.ndarray, affine: bool) -> np.ndarray:
    ctx = nk.active()
    root_eps = ctx.sqrt(ctx.eps)
    columns = []
    for i in range(len(x)):
        step = ctx.scalar(1) if affine else root_eps * (1 + abs(x[i]))
        shifted = np.array(x)
        shifted[i] = shifted[i] + step
        columns.append((residual(shifted) - base) / step)
    return np.stack(columns, axis=1)


def newton_solve(residual, x0: np.ndarray, settings: NewtonSettings, affine: bool = False) -> tuple[np.ndarray, int]:
    """Newton iteration with a finite-difference Jacobian; affine maps get one exact linear solve."""
    ctx = nk.active()
    abs_tol, rel_tol, step_tol = settings.resolved()
    x = np.array(x0)
    if affine:
        base = residual(x)
        try:
            factors = nk.lu_factor(_jacobian(residual, x, base, affine=True))
        except SingularMatrix as e:
            raise SingularJacobian("Local system matrix is singular") from e
        first = ctx.norm_inf(base)
        # one solve, then at most two refinement sweeps
        for iteration in range(3):
            delta = factors.solve(base)
            x = x - delta
            base = residual(x)
            size = ctx.norm_inf(base)
            if not math.isfinite(float(size)):
                raise NewtonDiverged("Residual is not finite", iteration=iteration)
            if size <= abs_tol + rel_tol * first or ctx.norm_inf(delta) <= step_tol * (1 + ctx.norm_inf(x)):
                return x, iteration + 1
        raise NewtonDiverged(
            f"Linear local system not solved to tolerance, residual {float(size):.3e}", residual=float(size)
        )

    first = None
    for iteration in range(settings.max_iter):
        base = residual(x)
        size = ctx.norm_inf(base)
        if not math.isfinite(float(size)):
            raise NewtonDiverged("Residual is not finite", iteration=iteration)
        if first is None:
            first = size
        if size <= abs_tol + rel_tol * first:
            return x, iteration
        try:
            delta = nk.solve_linear(_jacobian(residual, x, base, affine=False), -base)
        except SingularMatrix as e:
            raise SingularJacobian("Finite-difference Jacobian is singular", iteration=iteration) from e
        x = x + delta
        if ctx.norm_inf(delta) <= step_tol * (1 + ctx.norm_inf(x)):
            return x, iteration + 1
    raise NewtonDiverged(f"No convergence in {settings.max_iter} iterations", max_iter=settings.max_iter)


def solve_local(
    cfg: VtdConfig,
    problem: OdeProblem,
    interval: tuple,
    inherited_value,
    settings: Optional[NewtonSettings] = None,
    guess: Optional[LocalPolynomial] = None,
    rhs: Optional[Callable] = None,
) -> LocalPolynomial:
    settings = settings or NewtonSettings()
    a, b = interval
    shape = (cfg.r + 1, problem.dim)
    rhs = rhs or problem.rhs

    def residual(x):
        return assemble_local_residual(cfg, problem, interval, inherited_value, LocalPolynomial(a, b, x.reshape(shape)), rhs)

    constant = nk.active().zeros(shape)
    constant[0] = inherited_value
    starts = [constant] if guess is None else [guess.coefficients, constant]
    affine = problem.is_affine and settings.jacobian == "auto"
    error = None
    for start in starts:
        try:
            x, iterations = newton_solve(residual, start.ravel(), settings, affine=affine)
        except (NewtonDiverged, SingularJacobian) as e:
            error = e
            if affine:
                break
            logger.debug(f"Newton failed on [{float(a)}, {float(b)}] from one start: {e}")
            continue
        logger.debug(f"Solved [{float(a)}, {float(b)}] in {iterations} iteration(s)")
        return LocalPolynomial(a, b, x.reshape(shape))
    raise error


def march(
    cfg: VtdConfig,
    problem: OdeProblem,
    mesh,
    settings: Optional[NewtonSettings] = None,
) -> MeshSolution:
    """Solve the local problems interval by interval."""
    mesh = _validate_mesh(problem, mesh)
    N = len(mesh) - 1
    if cfg.rhs_override is not None and len(cfg.rhs_override) != N:
        raise InvalidMesh(f"Override has {len(cfg.rhs_override)} pieces for {N} intervals")
    jet = initial_jet(problem, cfg.r)
    inherited = problem.u0
    pieces = []
    for n in range(N):
        a, b = mesh[n], mesh[n + 1]
        guess = from_taylor(a, b, jet, cfg.r)
        try:
            piece = solve_local(cfg, problem, (a, b), inherited, settings, guess, local_rhs(problem, cfg, n))
        except VtdError as e:
            e.context.setdefault("interval", n + 1)
            raise
        pieces.append(piece)
        inherited = piece.extrapolate(b)
        jet = piece.taylor(b, cfg.r)
    logger.debug(f"Marched VTD({cfg.r},{cfg.k}) over {N} intervals of '{problem.name}'")
    return MeshSolution(mesh, tuple(pieces), problem.u0)


def check_solution(cfg: VtdConfig, problem: OdeProblem, sol: MeshSolution) -> float:
    """Largest local residual of a given piecewise polynomial for the method ``cfg``."""
    if cfg.rhs_override is not None and len(cfg.rhs_override) != sol.N:
        raise InvalidMesh(f"Override has {len(cfg.rhs_override)} pieces for {sol.N} intervals")
    inherited = sol.initial_value
    worst = 0.0
    for n, piece in enumerate(sol.pieces):
        residual = assemble_local_residual(
            cfg, problem, (piece.a, piece.b), inherited, piece, local_rhs(problem, cfg, n)
        )
        worst = max(worst, float(nk.active().norm_inf(residual)))
        inherited = piece.extrapolate(piece.b)
    return worst


def stability_function(cfg: VtdConfig, z: complex, settings: Optional[NewtonSettings] = None) -> complex:
    """R(z): one step of length 1 on u' = z u from u(0) = 1, via the real 2x2 embedding."""
    ctx = nk.active()
    z = complex(z)
    x, y = ctx.scalar(z.real), ctx.scalar(z.imag)
    problem = AffineLinearProblem.build(
        name="dahlquist-embedding",
        mass=ctx.eye(2),
        stiffness=[[-x, y], [-y, -x]],
        forcing=ZeroForcing(2),
        u0=[1, 0],
        t0=0,
        t_end=1,
    )
    try:
        sol = march(cfg, problem, [problem.t0, problem.t_end], settings)
    except SingularJacobian as e:
        raise SingularSystem(f"z={z} is a pole of the stability function", z=str(z)) from e
    value = sol.endpoint_values()[-1]
    return complex(float(value[0]), float(value[1]))
