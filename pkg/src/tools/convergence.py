import asyncio
from typing import Optional, Literal

from pydantic import BaseModel, Field, field_validator, model_validator

from src.utils.server_config import mcp, MAX_DEGREE, MAX_INTERVALS
from src.vtd.analysis import run_convergence_study
from src.vtd.postprocess import PostprocessMode
from src.vtd.problem import resolve_problem
from src.vtd.solver import VtdConfig



class ConvergenceRequest(BaseModel):
    """Data object for a convergence study on uniform meshes."""
    problem: str = Field("ex1", description="Builtin problem with a known solution: 'ex1', 'ex2' or 'dahlquist:<lambda>'")
    r: int = Field(1, description="Trial polynomial degree")
    k: int = Field(0, description="Smoothness parameter, 0 <= k <= r+1")
    integrator: str = Field("assoc", description="'assoc', 'exact' or 'q<rho>,<kappa>'")
    n_list: list[int] = Field([8, 16, 32, 64], description="Doubling list of interval counts (e.g., [32, 64, 128])")
    t_end: Optional[float] = Field(None, description="End time replacing the problem's default")
    method: Literal["vtd", "collocation"] = Field("vtd", description="Solver: VTD or the collocation method with multiple nodes")
    postprocess: Optional[Literal["jump", "residual"]] = Field(None, description="Postprocessing variant, none by default")
    pp_steps: int = Field(1, description="Number of postprocessing steps")
    cascade: int = Field(0, description="Depth of the interpolation cascade for affine-linear problems, 0 to disable")

    @field_validator("n_list")
    def validate_n_list(cls, v):
        if not v:
            raise ValueError("At least one N is required")
        if any(n < 1 or n > MAX_INTERVALS for n in v):
            raise ValueError(f"Every N must be between 1 and {MAX_INTERVALS}")
        if any(b != 2 * a for a, b in zip(v, v[1:])):
            raise ValueError("N values must double from one entry to the next")
        return v

    @model_validator(mode="after")
    def validate_combination(self):
        if self.r > MAX_DEGREE:
            raise ValueError(f"r must not exceed {MAX_DEGREE}")
        if self.cascade and not 1 <= self.cascade <= self.r - self.k:
            raise ValueError(f"Cascade depth must lie in [1, {self.r - self.k}]")
        return self


def _convergence(request: ConvergenceRequest) -> dict:
    problem = resolve_problem(request.problem, t_end=request.t_end)
    cfg = VtdConfig(r=request.r, k=request.k, integrator=request.integrator)
    postprocess = PostprocessMode(variant=request.postprocess, steps=request.pp_steps) if request.postprocess else None
    report = run_convergence_study(
        problem, cfg, request.n_list,
        postprocess=postprocess,
        cascade=request.cascade,
        method=request.method,
    )
    return report.to_dict()


@mcp.tool()
async def run_convergence(request: ConvergenceRequest) -> dict:
    """Run a convergence study. Returns error rows per (N, postprocessing step), eoc rows and the theoretical orders."""
    return await asyncio.to_thread(_convergence, request)
