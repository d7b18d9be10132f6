"""Error norms, experimental orders of convergence and convergence studies."""
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from math import factorial
from typing import Literal, Optional

import polars as pl
from fastmcp.utilities.logging import get_logger

from src.vtd import numkernel as nk
from src.vtd.collocation import CollocationConfig, march_collocation
from src.vtd.errors import ConfigError, InvalidParameters, NonPositiveError, VtdError
from src.vtd.numkernel import Jet
from src.vtd.postprocess import PostprocessMode, cascade_march, multi_postprocess
from src.vtd.problem import OdeProblem, TimeFunction
from src.vtd.quadrature import VtdQuadrature, build_rule, gauss_legendre
from src.vtd.solver import MeshSolution, NewtonSettings, VtdConfig, march, uniform_mesh

logger = get_logger(__name__)

NORMS = ("l2", "linf_mesh", "l2_deriv", "linf_mesh_deriv")
NODE_NORM = "linf_nodes"

# summary column -> (level, norm); level 0 is U, -1 the last postprocessed level
TABLE_COLUMNS = {
    "e_L2": (0, "l2"),
    "e_linf": (0, "linf_mesh"),
    "pp_e_L2": (-1, "l2"),
    "de_L2": (0, "l2_deriv"),
    "de_linf": (0, "linf_mesh_deriv"),
    "pp_de_L2": (-1, "l2_deriv"),
    "pp_de_linf": (-1, "linf_mesh_deriv"),
}



@dataclass(frozen=True)
class ErrorNorms:
    l2: float
    linf_mesh: float
    l2_deriv: float
    linf_mesh_deriv: float
    linf_nodes: Optional[float] = None

    def to_dict(self) -> dict:
        result = {name: getattr(self, name) for name in NORMS}
        if self.linf_nodes is not None:
            result["linf_nodes"] = self.linf_nodes
        return result


def error_norms(sol: MeshSolution, exact: TimeFunction, nodes: Optional[VtdQuadrature] = None) -> ErrorNorms:
    """Norms of e = u - U and e' = u' - U'.

    L2 norms integrate over the whole interval with max(2 deg + 4, 12)
    Gauss-Legendre points per piece; mesh norms take the Euclidean norm at
    every t_n^-, n = 1..N. With ``nodes`` the largest error at the mapped
    interior nodes of that rule is reported as well.
    """
    ctx = nk.active()
    points, weights = gauss_legendre(max(2 * sol.degree + 4, 12))
    l2, l2_deriv = ctx.scalar(0), ctx.scalar(0)
    linf, linf_deriv, linf_nodes = ctx.scalar(0), ctx.scalar(0), ctx.scalar(0)
    for piece in sol.pieces:
        times = piece.a + piece.half * (points + 1)
        values, derivatives = piece.values(times), piece.values(times, 1)
        for q, t in enumerate(times):
            u = exact(Jet.variable(t, 1))
            e = u.value - values[q]
            de = u.derivative_value(1) - derivatives[q]
            l2 = l2 + piece.half * weights[q] * (e @ e)
            l2_deriv = l2_deriv + piece.half * weights[q] * (de @ de)
        u = exact(Jet.variable(piece.b, 1))
        linf = max(linf, ctx.norm2(u.value - piece.extrapolate(piece.b)))
        linf_deriv = max(linf_deriv, ctx.norm2(u.derivative_value(1) - piece.extrapolate(piece.b, 1)))
        if nodes is not None:
            for t in nodes.mapped_nodes(piece.a, piece.b):
                linf_nodes = max(linf_nodes, ctx.norm2(exact(Jet.variable(t, 0)).value - piece.extrapolate(t)))
    return ErrorNorms(
        l2=float(ctx.sqrt(l2)),
        linf_mesh=float(linf),
        l2_deriv=float(ctx.sqrt(l2_deriv)),
        linf_mesh_deriv=float(linf_deriv),
        linf_nodes=float(linf_nodes) if nodes is not None else None,
    )


def eoc(e_coarse, e_fine) -> float:
    """log2 of the error ratio between N and 2N."""
    if not (e_coarse > 0 and e_fine > 0):
        raise NonPositiveError(f"EOC needs positive errors, got {float(e_coarse)} and {float(e_fine)}")
    return float(math.log(e_coarse / e_fine) / math.log(2))


def pade_exp(L: int, M: int, z: complex) -> complex:
    """(L, M) Pade approximant of exp(z)."""
    if L < 0 or M < 0:
        raise InvalidParameters(f"Pade degrees must be non-negative, got ({L}, {M})")
    z = complex(z)

    def series(n: int, argument: complex) -> complex:
        return sum(
            factorial(L + M - j) * factorial(n) / (factorial(L + M) * factorial(j) * factorial(n - j)) * argument ** j
            for j in range(n + 1)
        )

    return series(L, z) / series(M, -z)


def stability_reference_degrees(r: int, k: int) -> tuple[int, int]:
    """Pade degrees (L, M) of the stability function of VTD(r, k)."""
    if not 0 <= k <= r + 1:
        raise InvalidParameters(f"VTD needs 0 <= k <= r+1, got r={r}, k={k}")
    if k % 2 == 0:
        return r - k // 2, r - k // 2 + 1
    return r - k // 2, r - k // 2


def theoretical_orders(r: int, k: int, steps: int = 0, cascade: int = 0) -> dict[str, float]:
    """Expected orders after ``steps`` postprocessing steps; NaN where no estimate applies."""
    superconvergent = 2 * r - k + 1
    covered = steps <= 1 or (cascade > 0 and steps <= cascade + 1)
    return {
        "l2": float(min(r + 1 + steps, superconvergent)) if covered else math.nan,
        "linf_mesh": float(superconvergent),
        "l2_deriv": float(min(r + steps, superconvergent)) if covered else math.nan,
        "linf_mesh_deriv": float(superconvergent if steps >= 1 or k >= 1 else r),
        "linf_nodes": float(r + 2) if k < r and steps <= 1 else math.nan,
    }


def _plain(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


def _plain_rows(frame: pl.DataFrame) -> list[dict]:
    return [{key: _plain(value) for key, value in row.items()} for row in frame.to_dicts()]


@dataclass(frozen=True)
class ConvergenceReport:
    problem: str
    r: int
    k: int
    method: str
    variant: Optional[str]
    cascade: int
    errors: pl.DataFrame
    eoc: pl.DataFrame
    theory: pl.DataFrame

    @property
    def max_steps(self) -> int:
        return int(self.errors["steps"].max())

    def final_eoc(self, norm: str, steps: int = 0) -> float:
        rows = self.eoc.filter(pl.col("steps") == steps)
        if rows.is_empty():
            return math.nan
        return rows[norm][-1]

    def summary_table(self) -> pl.DataFrame:
        """One row per N, then the last eoc row and the theory row."""
        columns = {
            name: spec for name, spec in TABLE_COLUMNS.items()
            if spec[0] == 0 or self.max_steps > 0
        }
        levels = {name: self.max_steps if level == -1 else level for name, (level, _) in columns.items()}
        rows = []
        for N in self.errors["N"].unique(maintain_order=True).to_list():
            current = self.errors.filter(pl.col("N") == N)
            row = {"N": str(N)}
            for name, (_, norm) in columns.items():
                row[name] = current.filter(pl.col("steps") == levels[name])[norm][0]
            rows.append(row)
        eoc_row, theo_row = {"N": "eoc"}, {"N": "theo"}
        for name, (_, norm) in columns.items():
            eoc_row[name] = self.final_eoc(norm, levels[name])
            theo_row[name] = self.theory.filter(pl.col("steps") == levels[name])[norm][0]
        return pl.DataFrame(rows + [eoc_row, theo_row], schema={"N": pl.Utf8, **{c: pl.Float64 for c in columns}})

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "r": self.r,
            "k": self.k,
            "method": self.method,
            "variant": self.variant,
            "cascade": self.cascade,
            "errors": _plain_rows(self.errors),
            "eoc": _plain_rows(self.eoc),
            "theory": _plain_rows(self.theory),
        }


@dataclass(frozen=True)
class _StudyJob:
    problem: OdeProblem
    cfg: VtdConfig
    N: int
    method: str
    postprocess: Optional[PostprocessMode]
    cascade: int
    settings: Optional[NewtonSettings]


def _solve_levels(job: _StudyJob, mesh) -> list[MeshSolution]:
    if job.method == "collocation":
        return [march_collocation(CollocationConfig(r=job.cfg.r, k=job.cfg.k), job.problem, mesh, job.settings)]
    if job.cascade:
        U = cascade_march(job.cfg, job.problem, mesh, job.cascade, job.settings)
    else:
        U = march(job.cfg, job.problem, mesh, job.settings)
    if job.postprocess is None:
        return [U]
    return multi_postprocess(U, job.problem, job.cfg.r, job.cfg.k, job.postprocess).levels


def _run_single(job: _StudyJob) -> list[dict]:
    logger.info(f"Convergence run N={job.N} on '{job.problem.name}'")
    try:
        levels = _solve_levels(job, uniform_mesh(job.problem, job.N))
        nodes = build_rule(job.cfg.r, job.cfg.k) if job.cfg.k < job.cfg.r else None
        return [
            {"N": job.N, "steps": steps, **error_norms(sol, job.problem.exact, nodes).to_dict()}
            for steps, sol in enumerate(levels)
        ]
    except VtdError as e:
        e.context.setdefault("N", job.N)
        raise


def _check_n_list(n_list: list[int]):
    if not n_list:
        raise InvalidParameters("At least one N is required")
    if any(N < 1 for N in n_list) or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise InvalidParameters(f"N list must be positive and increasing, got {n_list}")


def _eoc_frame(errors: pl.DataFrame, floor: float) -> pl.DataFrame:
    norms = NORMS + ((NODE_NORM,) if NODE_NORM in errors.columns else ())
    rows = []
    for steps in errors["steps"].unique(maintain_order=True).to_list():
        level = errors.filter(pl.col("steps") == steps).to_dicts()
        for coarse, fine in zip(level, level[1:]):
            if fine["N"] != 2 * coarse["N"]:
                continue
            row = {"N": fine["N"], "steps": steps}
            for norm in norms:
                if min(coarse[norm], fine[norm]) < floor:
                    row[norm] = math.nan
                else:
                    row[norm] = eoc(coarse[norm], fine[norm])
            rows.append(row)
    schema = {"N": pl.Int64, "steps": pl.Int64, **{norm: pl.Float64 for norm in norms}}
    return pl.DataFrame(rows, schema=schema)


def run_convergence_study(
    problem: OdeProblem,
    cfg: VtdConfig,
    n_list: list[int],
    postprocess: Optional[PostprocessMode] = None,
    cascade: int = 0,
    settings: Optional[NewtonSettings] = None,
    workers: int = 1,
    method: Literal["vtd", "collocation"] = "vtd",
) -> ConvergenceReport:
    """Solve on uniform meshes with N intervals and tabulate errors, eoc and theory."""
    if problem.exact is None:
        raise ConfigError(f"Problem '{problem.name}' has no exact solution to measure errors against")
    if method == "collocation" and (postprocess is not None or cascade):
        raise ConfigError("Collocation runs take no postprocessing or cascade")
    _check_n_list(n_list)
    jobs = [_StudyJob(problem, cfg, N, method, postprocess, cascade, settings) for N in n_list]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=nk.configure, initargs=(nk.active().config,)) as pool:
            results = list(pool.map(_run_single, jobs))
    else:
        results = [_run_single(job) for job in jobs]

    ctx = nk.active()
    scale = max(
        1.0,
        float(ctx.norm_inf(problem.u0)),
        float(ctx.norm_inf(problem.exact(Jet.variable(problem.t_end, 0)).value)),
    )
    errors = pl.DataFrame([row for rows in results for row in rows]).sort(["steps", "N"])
    offset = 1 if method == "collocation" else 0
    theory = pl.DataFrame([
        {"steps": steps, **theoretical_orders(cfg.r, cfg.k, steps + offset, cascade)}
        for steps in errors["steps"].unique(maintain_order=True).to_list()
    ])
    return ConvergenceReport(
        problem=problem.name,
        r=cfg.r,
        k=cfg.k,
        method=method,
        variant=postprocess.variant if postprocess else None,
        cascade=cascade,
        errors=errors,
        eoc=_eoc_frame(errors, float(100 * ctx.eps) * scale),
        theory=theory,
    )
