import asyncio

from pydantic import BaseModel, Field, model_validator

from src.utils.server_config import mcp, MAX_DEGREE
from src.vtd.analysis import pade_exp, stability_reference_degrees
from src.vtd.solver import VtdConfig, stability_function as vtd_stability_function



class StabilityRequest(BaseModel):
    """Data object for evaluating the stability function R(z)."""
    r: int = Field(..., description="Trial polynomial degree")
    k: int = Field(0, description="Smoothness parameter, 0 <= k <= r+1")
    z_real: float = Field(..., description="Real part of z = tau * lambda")
    z_imag: float = Field(0.0, description="Imaginary part of z")

    @model_validator(mode="after")
    def validate_parameters(self):
        if self.r > MAX_DEGREE:
            raise ValueError(f"r must not exceed {MAX_DEGREE}")
        if not 0 <= self.k <= self.r + 1:
            raise ValueError("k must satisfy 0 <= k <= r+1")
        return self


def _stability(request: StabilityRequest) -> dict:
    z = complex(request.z_real, request.z_imag)
    value = vtd_stability_function(VtdConfig(r=request.r, k=request.k), z)
    L, M = stability_reference_degrees(request.r, request.k)
    return {
        "r": request.r,
        "k": request.k,
        "z": [z.real, z.imag],
        "R": [value.real, value.imag],
        "abs_R": abs(value),
        "pade_degrees": [L, M],
        "pade_R": [pade_exp(L, M, z).real, pade_exp(L, M, z).imag],
    }


@mcp.tool()
async def stability_function(request: StabilityRequest) -> dict:
    """Evaluate R(z), the one-step amplification factor on u' = lambda u with z = tau * lambda, next to its Pade reference."""
    return await asyncio.to_thread(_stability, request)
