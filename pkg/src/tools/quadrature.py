import asyncio

from pydantic import BaseModel, Field, model_validator

from src.utils.server_config import mcp, MAX_DEGREE
from src.tools.utils import quadrature_payload



class QuadratureRequest(BaseModel):
    """Data object for building a quadrature rule Q^{r,k}."""
    r: int = Field(..., description="Number of nodes minus one, counted with multiplicity (e.g., 1)")
    k: int = Field(0, description="Endpoint derivative data, 0 <= k <= r. Even k gives generalized Gauss-Radau, odd k Gauss-Lobatto rules")

    @model_validator(mode="after")
    def validate_parameters(self):
        if not 0 <= self.k <= self.r:
            raise ValueError("k must satisfy 0 <= k <= r")
        if self.r > MAX_DEGREE:
            raise ValueError(f"r must not exceed {MAX_DEGREE}")
        return self


@mcp.tool()
async def build_quadrature_rule(request: QuadratureRequest) -> dict:
    """Return nodes, weights (including endpoint derivative weights) and the exactness report of Q^{r,k} on [-1, 1]."""
    return await asyncio.to_thread(quadrature_payload, request.r, request.k)
