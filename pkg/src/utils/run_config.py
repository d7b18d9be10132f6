from typing import Optional, Literal

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from src.vtd.errors import ConfigError
from src.vtd.numkernel import PrecisionConfig
from src.vtd.postprocess import PostprocessMode
from src.vtd.problem import OdeProblem, resolve_problem
from src.vtd.solver import VtdConfig



class RunConfig(BaseModel):
    """Data object for one command-line run; validated before any computation."""
    subcommand: Literal["quadrature", "solve", "convergence"] = Field(..., description="What to run")
    problem: Optional[str] = Field(None, description="Builtin problem selector (e.g., 'ex1', 'dahlquist:-2')")
    config: Optional[str] = Field(None, description="Path to a JSON affine-linear problem config")
    r: int = Field(1, description="Trial polynomial degree")
    k: int = Field(0, description="Smoothness parameter")
    integrator: str = Field("assoc", description="'assoc', 'exact' or 'q<rho>,<kappa>'")
    steps: Optional[int] = Field(None, description="Number of uniform steps for 'solve'")
    n_list: Optional[list[int]] = Field(None, description="Doubling list of interval counts for 'convergence'")
    t_end: Optional[float] = Field(None, description="End time replacing the problem's default")
    method: Literal["vtd", "collocation"] = Field("vtd", description="VTD or collocation with multiple nodes")
    postprocess: Optional[Literal["jump", "residual"]] = Field(None, description="Postprocessing variant")
    pp_steps: int = Field(1, description="Number of postprocessing steps")
    cascade: int = Field(0, description="Interpolation cascade depth, 0 to disable")
    precision: Literal["double", "extended"] = Field("double", description="Scalar type of the run")
    bits: int = Field(256, description="Mantissa bits in extended precision")
    format: Literal["json", "csv"] = Field("json", description="Output format")
    out: Optional[str] = Field(None, description="Output file, stdout when omitted")
    samples_per_interval: int = Field(11, description="Samples per interval in 'solve' output")
    workers: int = Field(1, description="Worker processes for 'convergence'")

    @field_validator("r", "k", "cascade")
    def validate_non_negative(cls, v):
        if v < 0:
            raise ValueError("r, k and cascade must be non-negative")
        return v

    @field_validator("pp_steps", "workers")
    def validate_positive(cls, v):
        if v < 1:
            raise ValueError("pp_steps and workers must be at least 1")
        return v

    @field_validator("samples_per_interval")
    def validate_samples(cls, v):
        if v < 2:
            raise ValueError("At least two samples per interval are required")
        return v

    @model_validator(mode="after")
    def validate_combination(self):
        if self.subcommand == "quadrature":
            if self.k > self.r:
                raise ValueError(f"Q^(r,k) needs k <= r, got r={self.r}, k={self.k}")
            return self
        if self.k > self.r + 1:
            raise ValueError(f"k={self.k} exceeds r+1={self.r + 1}")
        if self.problem is None and self.config is None:
            raise ValueError("A problem selector or a problem config file is required")
        if self.postprocess and self.pp_steps > self.r + 1 - self.k:
            raise ValueError(f"At most {self.r + 1 - self.k} postprocessing steps for r={self.r}, k={self.k}")
        if self.cascade and not 1 <= self.cascade <= self.r - self.k:
            raise ValueError(f"Cascade depth must lie in [1, {self.r - self.k}] for r={self.r}, k={self.k}")
        if self.method == "collocation" and (self.postprocess or self.cascade):
            raise ValueError("Collocation runs take no postprocessing or cascade")
        if self.subcommand == "solve":
            if self.steps is None or self.steps < 1:
                raise ValueError("'solve' needs --steps >= 1")
            if self.cascade:
                raise ValueError("The cascade is available for 'convergence' only")
        if self.subcommand == "convergence":
            if not self.n_list:
                raise ValueError("'convergence' needs --n with a comma-separated list of N")
            if any(n < 1 for n in self.n_list) or any(b != 2 * a for a, b in zip(self.n_list, self.n_list[1:])):
                raise ValueError(f"N values must be positive and double from entry to entry, got {self.n_list}")
        return self

    @classmethod
    def build(cls, **values) -> "RunConfig":
        """Validate, reporting failures as ConfigError."""
        try:
            return cls(**values)
        except ValidationError as e:
            messages = "; ".join(error["msg"] for error in e.errors())
            raise ConfigError(messages) from e

    def precision_config(self) -> PrecisionConfig:
        return PrecisionConfig(mode=self.precision, bits=self.bits)

    def vtd_config(self) -> VtdConfig:
        try:
            return VtdConfig(r=self.r, k=self.k, integrator=self.integrator)
        except ValidationError as e:
            raise ConfigError("; ".join(error["msg"] for error in e.errors())) from e

    def postprocess_mode(self) -> Optional[PostprocessMode]:
        if self.postprocess is None:
            return None
        return PostprocessMode(variant=self.postprocess, steps=self.pp_steps)

    def load_problem(self) -> OdeProblem:
        problem = resolve_problem(self.problem, self.config, self.t_end)
        if self.cascade and not problem.is_affine:
            raise ConfigError(f"The interpolation cascade needs an affine-linear problem, '{problem.name}' is not")
        return problem
