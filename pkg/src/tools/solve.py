import asyncio
from typing import Optional, Literal

from pydantic import BaseModel, Field, field_validator, model_validator

from src.utils.server_config import mcp, MAX_DEGREE, MAX_INTERVALS, DEFAULT_SAMPLES_PER_INTERVAL
from src.tools.utils import solve_payload
from src.vtd.postprocess import PostprocessMode
from src.vtd.problem import resolve_problem
from src.vtd.solver import VtdConfig



class SolveRequest(BaseModel):
    """Data object for solving a builtin problem."""
    problem: str = Field("ex1", description="Builtin problem: 'ex1', 'ex2' or 'dahlquist:<lambda>' (e.g., 'dahlquist:-2')")
    r: int = Field(1, description="Trial polynomial degree")
    k: int = Field(0, description="Smoothness parameter, 0 <= k <= r+1. k=0 is dG(r), k=1 is cGP(r)")
    integrator: str = Field("assoc", description="'assoc', 'exact' or 'q<rho>,<kappa>'")
    steps: int = Field(16, description="Number of uniform time steps")
    t_end: Optional[float] = Field(None, description="End time replacing the problem's default")
    method: Literal["vtd", "collocation"] = Field("vtd", description="Solver: VTD or the collocation method with multiple nodes")
    postprocess: Optional[Literal["jump", "residual"]] = Field(None, description="Postprocessing variant, none by default")
    pp_steps: int = Field(1, description="Number of postprocessing steps")
    samples_per_interval: int = Field(DEFAULT_SAMPLES_PER_INTERVAL, description="Equidistant samples per interval, endpoints included")

    @field_validator("steps")
    def validate_steps(cls, v):
        if v < 1 or v > MAX_INTERVALS:
            raise ValueError(f"Steps must be between 1 and {MAX_INTERVALS}")
        return v

    @field_validator("samples_per_interval")
    def validate_samples(cls, v):
        if v < 2:
            raise ValueError("At least two samples per interval are required")
        return v

    @model_validator(mode="after")
    def validate_method(self):
        if self.r > MAX_DEGREE:
            raise ValueError(f"r must not exceed {MAX_DEGREE}")
        if self.method == "collocation" and self.postprocess is not None:
            raise ValueError("Collocation solutions are not postprocessed")
        return self


def _solve(request: SolveRequest) -> dict:
    problem = resolve_problem(request.problem, t_end=request.t_end)
    cfg = VtdConfig(r=request.r, k=request.k, integrator=request.integrator)
    postprocess = PostprocessMode(variant=request.postprocess, steps=request.pp_steps) if request.postprocess else None
    return solve_payload(
        problem, cfg, request.steps,
        method=request.method,
        postprocess=postprocess,
        samples_per_interval=request.samples_per_interval,
    )


@mcp.tool()
async def solve_problem(request: SolveRequest) -> dict:
    """Solve a builtin problem on a uniform mesh. Returns endpoint values, mesh values, sampled trajectory rows and the optional postprocessed trajectory."""
    return await asyncio.to_thread(_solve, request)
