"""Initial value problems M u' = F(t, u) with jet-evaluable right-hand sides."""
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Annotated, Any, Callable, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from src.vtd import numkernel as nk
from src.vtd.errors import ConfigError, SingularMass, SingularMatrix, UnknownProblem
from src.vtd.numkernel import Jet
from src.vtd.polynomial import LocalPolynomial

RhsFunction = Callable[[Jet, Jet], Jet]
TimeFunction = Callable[[Jet], Jet]

BUILTIN_PROBLEMS = ["ex1", "ex2", "dahlquist"]



@dataclass(frozen=True)
class OdeProblem:
    """M u' = F(t, u) on (t0, t_end) with u(t0) = u0.

    ``rhs`` maps a time jet and a state jet to the jet of F(t, u(t)); ``exact``
    maps a time jet to the jet of the exact solution when one is known.
    """
    name: str
    mass: np.ndarray
    rhs: RhsFunction
    u0: np.ndarray
    t0: Any
    t_end: Any
    exact: Optional[TimeFunction] = None
    _mass_lu: Any = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.mass.ndim != 2 or self.mass.shape != (len(self.u0), len(self.u0)):
            raise ConfigError(f"Mass matrix shape {self.mass.shape} does not match dimension {len(self.u0)}")
        if not self.t_end > self.t0:
            raise ConfigError(f"Empty time interval ({float(self.t0)}, {float(self.t_end)})")
        try:
            object.__setattr__(self, "_mass_lu", nk.lu_factor(self.mass))
        except SingularMatrix as e:
            raise SingularMass(f"Mass matrix of '{self.name}' is singular") from e

    @property
    def dim(self) -> int:
        return len(self.u0)

    @property
    def is_affine(self) -> bool:
        return False

    def solve_mass(self, b) -> np.ndarray:
        return self._mass_lu.solve(b)

    def with_interval(self, t_end=None, t0=None) -> "OdeProblem":
        ctx = nk.active()
        return replace(
            self,
            t0=self.t0 if t0 is None else ctx.scalar(t0),
            t_end=self.t_end if t_end is None else ctx.scalar(t_end),
        )

    def with_initial_value(self, u0) -> "OdeProblem":
        return replace(self, u0=nk.active().array(u0))


@dataclass(frozen=True)
class AffineRhs:
    """F(t, u) = f(t) - A u."""
    stiffness: np.ndarray
    forcing: TimeFunction

    def __call__(self, t: Jet, u: Jet) -> Jet:
        return self.forcing(t) - u.matvec(self.stiffness)


@dataclass(frozen=True)
class AffineLinearProblem(OdeProblem):
    """M u' = f(t) - A u with time-independent M and A."""
    stiffness: np.ndarray = None
    forcing: TimeFunction = None

    @classmethod
    def build(cls, name, mass, stiffness, forcing, u0, t0, t_end, exact=None) -> "AffineLinearProblem":
        ctx = nk.active()
        stiffness = ctx.array(stiffness)
        return cls(
            name=name,
            mass=ctx.array(mass),
            rhs=AffineRhs(stiffness, forcing),
            u0=ctx.array(u0),
            t0=ctx.scalar(t0),
            t_end=ctx.scalar(t_end),
            exact=exact,
            stiffness=stiffness,
            forcing=forcing,
        )

    @property
    def is_affine(self) -> bool:
        return True

    def with_forcing(self, forcing: TimeFunction) -> "AffineLinearProblem":
        return replace(self, forcing=forcing, rhs=AffineRhs(self.stiffness, forcing))


@dataclass(frozen=True)
class PolynomialForcing:
    """Forcing given by one polynomial on one interval; expects the identity time jet."""
    piece: LocalPolynomial

    def __call__(self, t: Jet) -> Jet:
        return self.piece.taylor(t.value, t.order)


@dataclass(frozen=True)
class ZeroForcing:
    dim: int

    def __call__(self, t: Jet) -> Jet:
        return Jet(nk.active().zeros((t.order + 1, self.dim)))


# ---------------------------------------------------------------------------
# Builtin problems

class NonlinearOscillatorRhs:
    """u1' = -u1^2 - u2, u2' = u1 - u1 u2."""

    def __call__(self, t: Jet, u: Jet) -> Jet:
        u1, u2 = u.component(0), u.component(1)
        return Jet.stack([-(u1 * u1) - u2, u1 - u1 * u2])


def nonlinear_oscillator_exact(t: Jet) -> Jet:
    s, c = t.sin_cos()
    denominator = s + 2
    return Jet.stack([c / denominator, s / denominator])


@dataclass(frozen=True)
class ManufacturedExponential:
    """u = ((t + t^2) e^t, -t e^t); with ``mass`` and ``stiffness`` set it returns f = M u' + A u."""
    mass: Optional[np.ndarray] = None
    stiffness: Optional[np.ndarray] = None

    def solution(self, t: Jet) -> tuple[Jet, Jet]:
        e = t.exp()
        u = Jet.stack([(t + t * t) * e, -(t * e)])
        du = Jet.stack([(t * t + t * 3 + 1) * e, -((t + 1) * e)])
        return u, du

    def __call__(self, t: Jet) -> Jet:
        u, du = self.solution(t)
        if self.mass is None:
            return u
        return du.matvec(self.mass) + u.matvec(self.stiffness)


@dataclass(frozen=True)
class DahlquistExact:
    lam: Any

    def __call__(self, t: Jet) -> Jet:
        return Jet.stack([(t * self.lam).exp()])


def _parse_dahlquist(name: str):
    _, _, value = name.partition(":")
    try:
        return nk.active().scalar(value) if value else nk.active().scalar(-1)
    except (ValueError, TypeError) as e:
        raise UnknownProblem(f"Invalid Dahlquist parameter in '{name}'") from e


def builtin(name: str) -> OdeProblem:
    """ex1, ex2 or dahlquist[:lambda]."""
    ctx = nk.active()
    if name == "ex1":
        return OdeProblem(
            name="ex1",
            mass=ctx.eye(2),
            rhs=NonlinearOscillatorRhs(),
            u0=ctx.array([ctx.ratio(1, 2), 0]),
            t0=ctx.scalar(0),
            t_end=ctx.scalar(32),
            exact=nonlinear_oscillator_exact,
        )
    if name == "ex2":
        mass = ctx.array([[1, 2], [-1, 3]])
        stiffness = ctx.array([[1, 2], [3, 4]])
        return AffineLinearProblem.build(
            name="ex2",
            mass=mass,
            stiffness=stiffness,
            forcing=ManufacturedExponential(mass, stiffness),
            u0=[0, 0],
            t0=0,
            t_end=1,
            exact=ManufacturedExponential(),
        )
    if name == "dahlquist" or name.startswith("dahlquist:"):
        lam = _parse_dahlquist(name)
        return AffineLinearProblem.build(
            name=name,
            mass=[[1]],
            stiffness=[[-lam]],
            forcing=ZeroForcing(1),
            u0=[1],
            t0=0,
            t_end=1,
            exact=DahlquistExact(lam),
        )
    raise UnknownProblem(f"Unknown problem '{name}'. Available: {', '.join(BUILTIN_PROBLEMS)}", problem=name)


def exact_solution(name: str, t) -> np.ndarray:
    problem = builtin(name)
    if problem.exact is None:
        raise UnknownProblem(f"Problem '{name}' has no closed-form solution", problem=name)
    return problem.exact(Jet.variable(t, 0)).value


def initial_jet(problem: OdeProblem, order: int) -> Jet:
    """Taylor coefficients of u at t0 from the recursion M u^{(j)} = d^{j-1}/dt^{j-1} F(t, u(t))."""
    ctx = nk.active()
    coefficients = ctx.zeros((order + 1, problem.dim))
    coefficients[0] = problem.u0
    for j in range(1, order + 1):
        f = problem.rhs(Jet.variable(problem.t0, j - 1), Jet(coefficients[:j]))
        coefficients[j] = problem.solve_mass(f.coefficients[j - 1]) / j
    return Jet(coefficients)


# ---------------------------------------------------------------------------
# Config-loaded affine-linear problems

@dataclass(frozen=True)
class PolynomialTimeFunction:
    """f_i(t) = sum_j c_ij t^j."""
    coefficients: np.ndarray

    def __call__(self, t: Jet) -> Jet:
        top = self.coefficients.shape[1] - 1
        result = Jet.constant(self.coefficients[:, top], t.order)
        for j in range(top - 1, -1, -1):
            result = result * t + self.coefficients[:, j]
        return result


@dataclass(frozen=True)
class ExpTrigTimeFunction:
    """f_i(t) = amplitude_i exp(rate_i t) cos(frequency_i t + phase_i)."""
    amplitude: np.ndarray
    rate: np.ndarray
    frequency: np.ndarray
    phase: np.ndarray

    def __call__(self, t: Jet) -> Jet:
        components = []
        for amp, rate, freq, phase in zip(self.amplitude, self.rate, self.frequency, self.phase):
            _, cosine = (t * freq + phase).sin_cos()
            components.append((t * rate).exp() * cosine * amp)
        return Jet.stack(components)


class PolynomialForcingPreset(BaseModel):
    kind: Literal["polynomial"] = "polynomial"
    coefficients: list[list[float]] = Field(..., description="Per component, coefficients of 1, t, t^2, ...")

    @field_validator("coefficients")
    def validate_coefficients(cls, v):
        if not v or any(len(row) != len(v[0]) or not row for row in v):
            raise ValueError("Polynomial coefficients must be a non-empty rectangular list")
        return v

    def build(self) -> PolynomialTimeFunction:
        return PolynomialTimeFunction(nk.active().array(self.coefficients))

    @property
    def components(self) -> int:
        return len(self.coefficients)


class ExpTrigForcingPreset(BaseModel):
    kind: Literal["exp_trig"] = "exp_trig"
    amplitude: list[float] = Field(..., description="Amplitude per component")
    rate: list[float] = Field(..., description="Exponential rate per component")
    frequency: list[float] = Field(..., description="Angular frequency per component")
    phase: list[float] = Field(..., description="Phase shift per component")

    @model_validator(mode="after")
    def validate_lengths(self):
        lengths = {len(self.amplitude), len(self.rate), len(self.frequency), len(self.phase)}
        if len(lengths) != 1:
            raise ValueError("amplitude, rate, frequency and phase must have equal lengths")
        return self

    def build(self) -> ExpTrigTimeFunction:
        ctx = nk.active()
        return ExpTrigTimeFunction(*(ctx.array(v) for v in (self.amplitude, self.rate, self.frequency, self.phase)))

    @property
    def components(self) -> int:
        return len(self.amplitude)


ForcingPreset = Annotated[Union[PolynomialForcingPreset, ExpTrigForcingPreset], Field(discriminator="kind")]


class CustomProblemConfig(BaseModel):
    """Affine-linear problem M u' = f(t) - A u read from a JSON file."""
    name: str = Field("custom", description="Label used in reports")
    M: list[list[float]] = Field(..., description="Regular mass matrix")
    A: list[list[float]] = Field(..., description="Stiffness matrix")
    f: ForcingPreset
    u0: list[float] = Field(..., description="Initial value")
    t0: float = Field(0.0, description="Initial time")
    T: float = Field(..., description="Length of the time interval")

    @field_validator("M", "A")
    def validate_square(cls, v):
        if not v or any(len(row) != len(v) for row in v):
            raise ValueError("Matrix must be square and non-empty")
        return v

    @field_validator("T")
    def validate_length(cls, v):
        if v <= 0:
            raise ValueError("T must be positive")
        return v

    @model_validator(mode="after")
    def validate_dimensions(self):
        d = len(self.u0)
        if len(self.M) != d or len(self.A) != d or self.f.components != d:
            raise ValueError(f"M, A and f must all have dimension {d}")
        return self

    def build(self) -> AffineLinearProblem:
        return AffineLinearProblem.build(
            name=self.name,
            mass=self.M,
            stiffness=self.A,
            forcing=self.f.build(),
            u0=self.u0,
            t0=self.t0,
            t_end=self.t0 + self.T,
        )


def load_problem(path: Union[str, Path]) -> AffineLinearProblem:
    try:
        config = CustomProblemConfig.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValidationError) as e:
        raise ConfigError(f"Could not load problem config {path}: {e}") from e
    return config.build()


def resolve_problem(selector: Optional[str] = None, config_path: Optional[str] = None, t_end=None) -> OdeProblem:
    """Builtin name or config file, optionally with a different end time."""
    if config_path:
        problem = load_problem(config_path)
    elif selector:
        problem = builtin(selector)
    else:
        raise ConfigError("Either a problem name or a problem config file is required")
    return problem.with_interval(t_end=t_end) if t_end is not None else problem
