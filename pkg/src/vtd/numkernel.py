"""Run-level precision, small dense linear algebra and truncated Taylor jets.

Every numerical routine of the package reads the active :class:`NumericContext`
instead of calling numpy's floating point helpers directly. In ``double`` mode
arrays are plain ``float64``; in ``extended`` mode they are object arrays of
``mpmath.mpf`` values at the configured bit count.
"""
from dataclasses import dataclass
from fractions import Fraction
from math import factorial
from numbers import Integral, Real
from typing import Literal, Optional

import mpmath
import numpy as np
from pydantic import BaseModel, Field, field_validator

from src.vtd.errors import InvalidParameters, OrderMismatch, PrecisionMismatch, SingularMatrix



class PrecisionConfig(BaseModel):
    """Scalar type used for a whole run."""
    mode: Literal["double", "extended"] = Field("double", description="native double or mpmath software floats")
    bits: int = Field(256, description="Mantissa bits in extended mode, ignored for double")

    @field_validator("bits")
    def validate_bits(cls, v):
        if v < 64:
            raise ValueError("Extended precision needs at least 64 bits")
        return v


class NumericContext:
    """Scalar constructors and elementary functions for one precision mode."""

    def __init__(self, config: PrecisionConfig):
        self.config = config
        if config.mode == "extended":
            mpmath.mp.prec = config.bits
            self.eps = mpmath.mpf(2) ** (1 - config.bits)
        else:
            self.eps = float(np.finfo(np.float64).eps)

    @property
    def extended(self) -> bool:
        return self.config.mode == "extended"

    @property
    def dtype(self):
        return object if self.extended else np.float64

    @property
    def pi(self):
        return +mpmath.mp.pi if self.extended else np.pi

    def scalar(self, value):
        if not self.extended:
            if isinstance(value, mpmath.mpf):
                raise PrecisionMismatch("Extended-precision scalar used in a double-precision run")
            if isinstance(value, Fraction):
                return value.numerator / value.denominator
            return float(value)
        return _to_mpf(value)

    def ratio(self, numerator: int, denominator: int):
        """Exact rational constant p/q rounded once in the active precision."""
        if self.extended:
            return mpmath.mpf(numerator) / denominator
        return numerator / denominator

    def array(self, values) -> np.ndarray:
        arr = np.asarray(values)
        if not self.extended:
            if arr.dtype == object:
                if any(isinstance(v, mpmath.mpf) for v in arr.flat):
                    raise PrecisionMismatch("Extended-precision array used in a double-precision run")
            return np.array(arr, dtype=np.float64)
        out = np.empty(arr.shape, dtype=object)
        for idx in np.ndindex(arr.shape):
            out[idx] = _to_mpf(arr[idx])
        return out

    def zeros(self, shape) -> np.ndarray:
        if self.extended:
            return np.full(shape, mpmath.mpf(0), dtype=object)
        return np.zeros(shape)

    def eye(self, n: int) -> np.ndarray:
        out = self.zeros((n, n))
        for i in range(n):
            out[i, i] = self.scalar(1)
        return out

    def _apply(self, fn_double, fn_extended, x):
        if self.extended:
            return np.frompyfunc(fn_extended, 1, 1)(x)
        return fn_double(x)

    def sqrt(self, x):
        return self._apply(np.sqrt, mpmath.sqrt, x)

    def exp(self, x):
        return self._apply(np.exp, mpmath.exp, x)

    def sin(self, x):
        return self._apply(np.sin, mpmath.sin, x)

    def cos(self, x):
        return self._apply(np.cos, mpmath.cos, x)

    def norm_inf(self, x):
        arr = np.asarray(x)
        if arr.size == 0:
            return self.scalar(0)
        return np.max(np.abs(arr))

    def norm2(self, x):
        arr = np.asarray(x).ravel()
        return self.sqrt(np.sum(arr * arr)) if arr.size else self.scalar(0)

    @staticmethod
    def to_float(x):
        return np.asarray(x).astype(np.float64)


def _to_mpf(value):
    if isinstance(value, mpmath.mpf):
        return value
    if isinstance(value, Fraction):
        return mpmath.mpf(value.numerator) / value.denominator
    if isinstance(value, Integral):
        return mpmath.mpf(int(value))
    if isinstance(value, (Real, str)):
        return mpmath.mpf(value)
    raise PrecisionMismatch(f"Cannot convert {type(value).__name__} to an extended-precision scalar")


_ACTIVE = NumericContext(PrecisionConfig())


def configure(config: Optional[PrecisionConfig] = None, **kwargs) -> NumericContext:
    """Select the precision mode for the run and return the new active context."""
    global _ACTIVE
    config = config or PrecisionConfig(**kwargs)
    _ACTIVE = NumericContext(config)
    return _ACTIVE


def active() -> NumericContext:
    return _ACTIVE


# ---------------------------------------------------------------------------
# Dense linear algebra

@dataclass(frozen=True)
class LUFactors:
    lu: np.ndarray
    perm: np.ndarray

    @property
    def size(self) -> int:
        return self.lu.shape[0]

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b)
        n = self.size
        if b.shape[0] != n:
            raise InvalidParameters(f"Right-hand side has {b.shape[0]} rows, matrix has {n}")
        vector = b.ndim == 1
        y = np.array(b.reshape(n, -1)[self.perm], dtype=np.result_type(self.lu, b))
        for i in range(1, n):
            y[i] = y[i] - self.lu[i, :i] @ y[:i]
        for i in range(n - 1, -1, -1):
            y[i] = (y[i] - self.lu[i, i + 1:] @ y[i + 1:]) / self.lu[i, i]
        return y[:, 0] if vector else y


def lu_factor(A, pivot_eps=None) -> LUFactors:
    """LU factorization with partial pivoting in the active precision."""
    ctx = active()
    a = ctx.array(A).copy()
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidParameters(f"Square matrix required, got shape {a.shape}")
    n = a.shape[0]
    scale = ctx.norm_inf(a)
    if n and scale == 0:
        raise SingularMatrix("Matrix is identically zero", column=0)
    threshold = pivot_eps if pivot_eps is not None else 1000 * ctx.eps * scale
    perm = np.arange(n)
    for j in range(n):
        p = j + int(np.argmax(np.abs(a[j:, j])))
        if abs(a[p, j]) <= threshold:
            raise SingularMatrix(f"Pivot {float(abs(a[p, j])):.3e} below threshold in column {j}", column=j)
        if p != j:
            a[[j, p]] = a[[p, j]]
            perm[[j, p]] = perm[[p, j]]
        a[j + 1:, j] = a[j + 1:, j] / a[j, j]
        a[j + 1:, j + 1:] = a[j + 1:, j + 1:] - np.outer(a[j + 1:, j], a[j, j + 1:])
    return LUFactors(lu=a, perm=perm)


def solve_linear(A, b, pivot_eps=None) -> np.ndarray:
    return lu_factor(A, pivot_eps=pivot_eps).solve(active().array(b))


# ---------------------------------------------------------------------------
# Truncated Taylor jets

class Jet:
    """Truncated Taylor expansion c_0 + c_1 h + ... + c_p h^p of a time-dependent quantity.

    ``coefficients`` has shape ``(p+1,)`` for scalar quantities and ``(p+1, d)``
    for vector ones. Coefficient ``c_j`` equals the j-th derivative divided by j!.
    """

    __slots__ = ("coefficients",)
    __array_ufunc__ = None

    def __init__(self, coefficients):
        self.coefficients = np.asarray(coefficients)

    @property
    def order(self) -> int:
        return self.coefficients.shape[0] - 1

    @property
    def shape(self) -> tuple:
        return self.coefficients.shape[1:]

    @property
    def value(self):
        return self.coefficients[0]

    @classmethod
    def constant(cls, value, order: int) -> "Jet":
        ctx = active()
        value = ctx.array(value)
        coefficients = ctx.zeros((order + 1,) + value.shape)
        coefficients[0] = value
        return cls(coefficients)

    @classmethod
    def variable(cls, t0, order: int) -> "Jet":
        """Jet of the identity map t -> t expanded at t0."""
        ctx = active()
        coefficients = ctx.zeros(order + 1)
        coefficients[0] = ctx.scalar(t0)
        if order >= 1:
            coefficients[1] = ctx.scalar(1)
        return cls(coefficients)

    @staticmethod
    def stack(jets: list["Jet"]) -> "Jet":
        orders = {jet.order for jet in jets}
        if len(orders) != 1:
            raise OrderMismatch(f"Cannot stack jets of orders {sorted(orders)}")
        return Jet(np.stack([jet.coefficients for jet in jets], axis=1))

    def component(self, i: int) -> "Jet":
        return Jet(self.coefficients[:, i])

    def derivative_value(self, j: int):
        """d^j/dt^j of the expanded quantity at the expansion point."""
        return factorial(j) * self.coefficients[j]

    def derivative_values(self) -> np.ndarray:
        return np.array([self.derivative_value(j) for j in range(self.order + 1)])

    def derivative(self) -> "Jet":
        """Jet of the time derivative, one order lower."""
        if self.order == 0:
            raise OrderMismatch("Cannot differentiate a jet of order 0")
        factors = np.arange(1, self.order + 1).reshape((-1,) + (1,) * len(self.shape))
        return Jet(self.coefficients[1:] * factors)

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise OrderMismatch(f"Cannot raise jet order from {self.order} to {order}")
        return Jet(self.coefficients[: order + 1])

    def matvec(self, matrix) -> "Jet":
        return Jet(self.coefficients @ np.asarray(matrix).T)

    def _check(self, other: "Jet"):
        if other.order != self.order:
            raise OrderMismatch(f"Jet orders differ: {self.order} and {other.order}")

    def __add__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            a, b = _align(self.coefficients, other.coefficients)
            return Jet(a + b)
        out = np.array(self.coefficients)
        out[0] = out[0] + other
        return Jet(out)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.coefficients)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.coefficients * other)
        self._check(other)
        a, b = _align(self.coefficients, other.coefficients)
        out = np.zeros(np.broadcast_shapes(a.shape, b.shape), dtype=np.result_type(a, b))
        for j in range(self.order + 1):
            for i in range(j + 1):
                out[j] = out[j] + a[i] * b[j - i]
        return Jet(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.coefficients / other)
        self._check(other)
        a, b = _align(self.coefficients, other.coefficients)
        out = np.zeros(np.broadcast_shapes(a.shape, b.shape), dtype=np.result_type(a, b))
        for j in range(self.order + 1):
            acc = a[j]
            for i in range(1, j + 1):
                acc = acc - b[i] * out[j - i]
            out[j] = acc / b[0]
        return Jet(out)

    def __rtruediv__(self, other):
        return Jet.constant(np.broadcast_to(other, self.shape), self.order) / self

    def exp(self) -> "Jet":
        ctx = active()
        w = self.coefficients
        out = np.zeros(w.shape, dtype=np.result_type(w, ctx.dtype))
        out[0] = ctx.exp(w[0])
        for j in range(1, self.order + 1):
            acc = 0
            for i in range(1, j + 1):
                acc = acc + i * w[i] * out[j - i]
            out[j] = acc / j
        return Jet(out)

    def sin_cos(self) -> tuple["Jet", "Jet"]:
        ctx = active()
        w = self.coefficients
        dtype = np.result_type(w, ctx.dtype)
        s = np.zeros(w.shape, dtype=dtype)
        c = np.zeros(w.shape, dtype=dtype)
        s[0] = ctx.sin(w[0])
        c[0] = ctx.cos(w[0])
        for j in range(1, self.order + 1):
            acc_s, acc_c = 0, 0
            for i in range(1, j + 1):
                acc_s = acc_s + i * w[i] * c[j - i]
                acc_c = acc_c - i * w[i] * s[j - i]
            s[j] = acc_s / j
            c[j] = acc_c / j
        return Jet(s), Jet(c)

    def __repr__(self) -> str:
        return f"Jet(order={self.order}, shape={self.shape})"


def _align(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Let scalar jets multiply vector jets coefficient-wise."""
    if a.ndim < b.ndim:
        a = a.reshape(a.shape + (1,) * (b.ndim - a.ndim))
    elif b.ndim < a.ndim:
        b = b.reshape(b.shape + (1,) * (a.ndim - b.ndim))
    return a, b


def jet_arith(op: Literal["add", "sub", "mul", "scale"], a: Jet, b) -> Jet:
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        if not isinstance(b, Jet):
            raise OrderMismatch("mul expects two jets, use scale for constants")
        return a * b
    if op == "scale":
        return Jet(a.coefficients * b)
    raise InvalidParameters(f"Unknown jet operation '{op}'")
