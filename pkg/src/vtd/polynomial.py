"""Polynomials on one time interval, stored in the Legendre basis of [-1, 1]."""
from dataclasses import dataclass, field
from math import factorial
from typing import Any, Callable, Literal, Union

import numpy as np

from src.vtd import numkernel as nk
from src.vtd.errors import InvalidParameters, OutOfInterval, SingularConstraintSystem, SingularMatrix
from src.vtd.numkernel import Jet



def legendre_table(x, degree: int, max_deriv: int) -> np.ndarray:
    """Values of P_m^{(j)}(x) for m <= degree and j <= max_deriv.

    Returns an array of shape ``(max_deriv+1, degree+1) + shape(x)``.
    """
    x = np.asarray(x)
    one = x * 0 + 1
    zero = x * 0
    table = [[None] * (degree + 1) for _ in range(max_deriv + 1)]
    for j in range(max_deriv + 1):
        table[j][0] = one if j == 0 else zero
        if degree >= 1:
            table[j][1] = x if j == 0 else (one if j == 1 else zero)
    for m in range(1, degree):
        table[0][m + 1] = ((2 * m + 1) * x * table[0][m] - m * table[0][m - 1]) / (m + 1)
        for j in range(1, max_deriv + 1):
            table[j][m + 1] = table[j][m - 1] + (2 * m + 1) * table[j - 1][m]
    return np.array(table)


def _legendre_derivative(c: np.ndarray) -> np.ndarray:
    n = c.shape[0] - 1
    if n == 0:
        return c * 0
    c = np.array(c)
    der = np.zeros((n,) + c.shape[1:], dtype=c.dtype)
    for j in range(n, 2, -1):
        der[j - 1] = (2 * j - 1) * c[j]
        c[j - 2] = c[j - 2] + c[j]
    if n > 1:
        der[1] = 3 * c[2]
    der[0] = c[1]
    return der


def _legendre_mulx(c: np.ndarray) -> np.ndarray:
    """Coefficients of x*q given those of q."""
    out = np.zeros((c.shape[0] + 1,) + c.shape[1:], dtype=c.dtype)
    for m in range(c.shape[0]):
        out[m + 1] = out[m + 1] + c[m] * (m + 1) / (2 * m + 1)
        if m >= 1:
            out[m - 1] = out[m - 1] + c[m] * m / (2 * m + 1)
    return out


@dataclass(frozen=True)
class LocalPolynomial:
    """Vector-valued polynomial on [a, b] with Legendre coefficients of shape (degree+1, d)."""
    a: Any
    b: Any
    coefficients: np.ndarray = field(repr=False)

    @property
    def degree(self) -> int:
        return self.coefficients.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.coefficients.shape[1]

    @property
    def half(self):
        return (self.b - self.a) / 2

    def reference(self, t):
        return (2 * t - self.a - self.b) / (self.b - self.a)

    def contains(self, t) -> bool:
        slack = 64 * nk.active().eps * (abs(self.a) + abs(self.b) + (self.b - self.a))
        return self.a - slack <= t <= self.b + slack

    def __call__(self, t, deriv: int = 0) -> np.ndarray:
        if not self.contains(t):
            raise OutOfInterval(f"t={float(t)} outside [{float(self.a)}, {float(self.b)}]", t=t)
        return self.extrapolate(t, deriv)

    def extrapolate(self, t, deriv: int = 0) -> np.ndarray:
        """Evaluate the polynomial expression anywhere, without the interval check."""
        table = legendre_table(self.reference(t), self.degree, deriv)
        return (table[deriv] @ self.coefficients) / self.half ** deriv

    def values(self, ts, deriv: int = 0) -> np.ndarray:
        """Rows of p^{(deriv)} at each time in ``ts``, shape (len(ts), d)."""
        ts = np.asarray(ts)
        for t in ts:
            if not self.contains(t):
                raise OutOfInterval(f"t={float(t)} outside [{float(self.a)}, {float(self.b)}]", t=t)
        table = legendre_table(self.reference(ts), self.degree, deriv)
        return (table[deriv].T @ self.coefficients) / self.half ** deriv

    def taylor(self, t, order: int) -> Jet:
        """Jet of the polynomial at t (one-sided at the endpoints)."""
        table = legendre_table(self.reference(t), self.degree, order)
        coefficients = nk.active().zeros((order + 1, self.dim))
        for j in range(order + 1):
            coefficients[j] = (table[j] @ self.coefficients) / (self.half ** j * factorial(j))
        return Jet(coefficients)

    def derivative(self, order: int = 1) -> "LocalPolynomial":
        c = self.coefficients
        for _ in range(order):
            c = _legendre_derivative(c) / self.half
        return LocalPolynomial(self.a, self.b, c)

    def raise_degree(self, degree: int) -> "LocalPolynomial":
        if degree < self.degree:
            raise InvalidParameters(f"Cannot lower degree {self.degree} to {degree}")
        padding = nk.active().zeros((degree - self.degree, self.dim))
        return LocalPolynomial(self.a, self.b, np.concatenate([self.coefficients, padding]))

    def times_vector(self, vector) -> "LocalPolynomial":
        """Scalar polynomial times a constant vector."""
        return LocalPolynomial(self.a, self.b, self.coefficients[:, :1] * np.asarray(vector)[None, :])

    def __add__(self, other: "LocalPolynomial") -> "LocalPolynomial":
        degree = max(self.degree, other.degree)
        return LocalPolynomial(
            self.a, self.b,
            self.raise_degree(degree).coefficients + other.raise_degree(degree).coefficients,
        )

    def __sub__(self, other: "LocalPolynomial") -> "LocalPolynomial":
        return self + LocalPolynomial(other.a, other.b, -other.coefficients)


TimeSource = Union[LocalPolynomial, Callable[[Jet], Jet]]


def jet_at(source: TimeSource, t, order: int) -> Jet:
    """Taylor jet of a polynomial or of a jet-evaluable time function."""
    if isinstance(source, LocalPolynomial):
        return source.taylor(t, order)
    return source(Jet.variable(t, order))


@dataclass(frozen=True)
class HermiteSpec:
    left_orders: int
    right_orders: int
    interior_nodes: tuple = ()

    @property
    def count(self) -> int:
        return self.left_orders + self.right_orders + len(self.interior_nodes)


@dataclass(frozen=True)
class HermiteData:
    """Derivatives 0.. at a and b (physical time) and values at the interior nodes."""
    left: np.ndarray
    interior: np.ndarray
    right: np.ndarray


def constraint_matrix(left_orders: int, right_orders: int, reference_nodes, degree: int) -> np.ndarray:
    """Rows of Hermite constraints on [-1, 1] acting on Legendre coefficients."""
    ctx = nk.active()
    rows = []
    if left_orders:
        table = legendre_table(ctx.scalar(-1), degree, left_orders - 1)
        rows.extend(table[i] for i in range(left_orders))
    nodes = ctx.array(reference_nodes)
    if nodes.size:
        rows.extend(legendre_table(nodes, degree, 0)[0].T)
    if right_orders:
        table = legendre_table(ctx.scalar(1), degree, right_orders - 1)
        rows.extend(table[i] for i in range(right_orders))
    return np.array(rows)


def hermite_interpolate(spec: HermiteSpec, data: HermiteData, degree: int, a, b) -> LocalPolynomial:
    if spec.count != degree + 1:
        raise InvalidParameters(f"{spec.count} Hermite constraints for a degree {degree} polynomial")
    ctx = nk.active()
    half = (b - a) / 2
    nodes = ctx.array(spec.interior_nodes)
    reference = (2 * nodes - a - b) / (b - a) if nodes.size else nodes
    matrix = constraint_matrix(spec.left_orders, spec.right_orders, reference, degree)
    rhs = []
    rhs.extend(np.asarray(data.left[i]) * half ** i for i in range(spec.left_orders))
    rhs.extend(np.asarray(data.interior[i]) for i in range(len(spec.interior_nodes)))
    rhs.extend(np.asarray(data.right[i]) * half ** i for i in range(spec.right_orders))
    try:
        coefficients = nk.solve_linear(matrix, np.array(rhs))
    except SingularMatrix as e:
        raise SingularConstraintSystem("Hermite constraints do not determine the polynomial") from e
    return LocalPolynomial(a, b, coefficients)


def from_taylor(a, b, jet: Jet, degree: int) -> LocalPolynomial:
    """Polynomial on [a, b] whose Taylor expansion at a matches ``jet`` up to ``degree``."""
    derivatives = np.array([jet.derivative_value(j) for j in range(degree + 1)])
    empty = nk.active().zeros((0, jet.shape[0]))
    return hermite_interpolate(HermiteSpec(degree + 1, 0), HermiteData(derivatives, empty, empty), degree, a, b)


def theta_polynomial(
    r: int,
    k: int,
    a,
    b,
    quadrature_nodes,
    normalization: Literal["right", "left"] = "right",
) -> LocalPolynomial:
    """Degree r+1 polynomial vanishing at every node of Q^{r,k} with its multiplicity.

    ``quadrature_nodes`` are the interior nodes on [-1, 1]. The right
    normalization fixes the p_R-th derivative at b to 1, the left one the
    p_L-th derivative at a.
    """
    if not 0 <= k <= r:
        raise InvalidParameters(f"theta needs 0 <= k <= r, got r={r}, k={k}")
    ctx = nk.active()
    nodes = list(ctx.array(quadrature_nodes))
    p_left, p_right = (k - 1) // 2 + 1, k // 2 + 1
    if p_left + p_right + len(nodes) != r + 2:
        raise InvalidParameters(f"{len(nodes)} interior nodes do not match Q^({r},{k})")
    one = ctx.scalar(1)
    q = ctx.array([one])
    factors = [-one] * p_left + [one] * p_right + nodes
    for root in factors:
        q = _legendre_mulx(q) - np.concatenate([q * root, ctx.zeros(1)])

    if normalization == "right":
        endpoint = factorial(p_right) * 2 ** p_left * np.prod([one - x for x in nodes] or [one])
        power = p_right
    else:
        endpoint = factorial(p_left) * (-2) ** p_right * np.prod([-one - x for x in nodes] or [one])
        power = p_left
    half = (b - a) / 2
    coefficients = q * (half ** power / endpoint)
    return LocalPolynomial(a, b, coefficients.reshape(-1, 1))
