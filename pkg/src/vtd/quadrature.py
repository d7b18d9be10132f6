"""Generalized Gauss-Radau / Gauss-Lobatto rules with endpoint derivative data."""
from dataclasses import dataclass
from functools import lru_cache
from math import factorial
from typing import Optional

import numpy as np
from fastmcp.utilities.logging import get_logger

from src.vtd import numkernel as nk
from src.vtd.errors import InvalidParameters
from src.vtd.polynomial import (
    HermiteData,
    HermiteSpec,
    LocalPolynomial,
    TimeSource,
    constraint_matrix,
    hermite_interpolate,
    jet_at,
)

logger = get_logger(__name__)


def _read_only(values: np.ndarray) -> np.ndarray:
    values.setflags(write=False)
    return values


def jacobi_eval(n: int, alpha, beta, x):
    """P_n^{(alpha, beta)}(x) by the three-term recurrence."""
    x = np.asarray(x) if not np.isscalar(x) else x
    p_prev = x * 0 + 1
    if n == 0:
        return p_prev
    ab = alpha + beta
    p = (alpha + 1) + (ab + 2) * (x - 1) / 2
    for m in range(1, n):
        c = 2 * m + ab
        numerator = (c + 1) * ((c + 2) * c * x + alpha * alpha - beta * beta) * p \
            - 2 * (m + alpha) * (m + beta) * (c + 2) * p_prev
        p_prev, p = p, numerator / (2 * (m + 1) * (m + ab + 1) * c)
    return p


def jacobi_eval_with_derivative(n: int, alpha, beta, x):
    p = jacobi_eval(n, alpha, beta, x)
    if n == 0:
        return p, x * 0
    return p, (n + alpha + beta + 1) * jacobi_eval(n - 1, alpha + 1, beta + 1, x) / 2


def _brackets(n: int, alpha, beta) -> list[tuple[float, float]]:
    size = 40 * (n + 1)
    while size < 10 ** 6:
        grid = -np.cos(np.pi * np.arange(size + 1) / size)
        signs = np.sign(jacobi_eval(n, float(alpha), float(beta), grid))
        brackets = []
        for i in range(size):
            if signs[i] * signs[i + 1] < 0:
                brackets.append((grid[i], grid[i + 1]))
            elif signs[i] == 0 and 0 < i:
                brackets.append((grid[i - 1], grid[i + 1]))
        if len(brackets) == n:
            return brackets
        size *= 2
    raise InvalidParameters(f"Could not isolate the zeros of P_{n}^({alpha},{beta})")


def jacobi_zeros(n: int, alpha, beta) -> np.ndarray:
    """Sorted zeros of the degree-n Jacobi polynomial for the weight (1-t)^alpha (1+t)^beta."""
    if n < 0 or alpha <= -1 or beta <= -1:
        raise InvalidParameters(f"Invalid Jacobi parameters n={n}, alpha={alpha}, beta={beta}")
    ctx = nk.active()
    if n == 0:
        return ctx.array([])
    tol = ctx.scalar(2) ** (8 - ctx.config.bits) if ctx.extended else 1e-15
    zeros = []
    for lo_f, hi_f in _brackets(n, alpha, beta):
        lo, hi = ctx.scalar(lo_f), ctx.scalar(hi_f)
        lo_positive = jacobi_eval(n, alpha, beta, lo) > 0
        x = (lo + hi) / 2
        for _ in range(100):
            p, dp = jacobi_eval_with_derivative(n, alpha, beta, x)
            if p == 0:
                break
            if (p > 0) == lo_positive:
                lo = x
            else:
                hi = x
            x_new = x - p / dp if dp != 0 else (lo + hi) / 2
            if not lo < x_new < hi:
                x_new = (lo + hi) / 2
            if abs(x_new - x) <= tol:
                x = x_new
                break
            x = x_new
        zeros.append(x)
    return ctx.array(sorted(zeros))


@lru_cache(maxsize=64)
def _gauss_legendre(n: int, mode: str, bits: int) -> tuple[np.ndarray, np.ndarray]:
    nodes = jacobi_zeros(n, 0, 0)
    _, dp = jacobi_eval_with_derivative(n, 0, 0, nodes)
    weights = 2 / ((1 - nodes * nodes) * dp * dp)
    return _read_only(nodes), _read_only(weights)


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre nodes and weights on [-1, 1] in the active precision."""
    config = nk.active().config
    return _gauss_legendre(n, config.mode, config.bits)


@dataclass(frozen=True)
class VtdQuadrature:
    """Rule Q^{r,k} on [-1, 1]; r+1 nodes counted with multiplicity, exact to degree 2r-k."""
    r: int
    k: int
    left_weights: np.ndarray
    nodes: np.ndarray
    interior_weights: np.ndarray
    right_weights: np.ndarray

    @property
    def exactness_degree(self) -> int:
        return 2 * self.r - self.k

    @property
    def left_orders(self) -> int:
        return (self.k - 1) // 2 + 1

    @property
    def right_orders(self) -> int:
        return self.k // 2 + 1

    def mapped_nodes(self, a, b) -> np.ndarray:
        return a + (b - a) * (self.nodes + 1) / 2

    def hermite_spec(self, a, b) -> HermiteSpec:
        return HermiteSpec(self.left_orders, self.right_orders, tuple(self.mapped_nodes(a, b)))

    def signs_ok(self) -> bool:
        left = all(w > 0 for w in self.left_weights)
        interior = all(w > 0 for w in self.interior_weights)
        right = all((-1) ** j * w > 0 for j, w in enumerate(self.right_weights))
        return left and interior and right


def _check_rule_parameters(r: int, k: int):
    if k < 0 or r < k:
        raise InvalidParameters(f"Q^(r,k) requires 0 <= k <= r, got r={r}, k={k}", r=r, k=k)


@lru_cache(maxsize=256)
def _build_rule(r: int, k: int, mode: str, bits: int) -> VtdQuadrature:
    ctx = nk.active()
    left_orders, right_orders = (k - 1) // 2 + 1, k // 2 + 1
    nodes = jacobi_zeros(r - k, k // 2 + 1, (k - 1) // 2 + 1)
    matrix = constraint_matrix(left_orders, right_orders, nodes, r)
    moments = ctx.zeros(r + 1)
    moments[0] = ctx.scalar(2)
    weights = _read_only(nk.solve_linear(matrix.T, moments))
    logger.debug(f"Built Q^({r},{k}) with {len(nodes)} interior nodes")
    return VtdQuadrature(
        r=r,
        k=k,
        left_weights=weights[:left_orders],
        nodes=_read_only(nodes),
        interior_weights=weights[left_orders:left_orders + len(nodes)],
        right_weights=weights[left_orders + len(nodes):],
    )


def build_rule(r: int, k: int) -> VtdQuadrature:
    _check_rule_parameters(r, k)
    config = nk.active().config
    return _build_rule(r, k, config.mode, config.bits)


def apply_rule(rule: VtdQuadrature, a, b, f: TimeSource):
    """Transformed rule on [a, b]; derivative data of f enters with the (tau/2)^i factor."""
    half = (b - a) / 2
    total = 0
    if rule.left_orders:
        jet = jet_at(f, a, rule.left_orders - 1)
        for i, w in enumerate(rule.left_weights):
            total = total + w * half ** i * jet.derivative_value(i)
    for t, w in zip(rule.mapped_nodes(a, b), rule.interior_weights):
        total = total + w * jet_at(f, t, 0).value
    jet = jet_at(f, b, rule.right_orders - 1)
    for i, w in enumerate(rule.right_weights):
        total = total + w * half ** i * jet.derivative_value(i)
    return half * total


def interpolate_rule(source: TimeSource, rule: VtdQuadrature, a, b) -> LocalPolynomial:
    """I^{r,k} on [a, b]: Hermite interpolation at the node multiset of ``rule``."""
    left = jet_at(source, a, max(rule.left_orders - 1, 0)).derivative_values()[:rule.left_orders]
    right = jet_at(source, b, rule.right_orders - 1).derivative_values()
    interior = np.array([jet_at(source, t, 0).value for t in rule.mapped_nodes(a, b)])
    if interior.size == 0:
        interior = nk.active().zeros((0,) + right.shape[1:])
    return hermite_interpolate(rule.hermite_spec(a, b), HermiteData(left, interior, right), rule.r, a, b)


@dataclass(frozen=True)
class ExactnessReport:
    r: int
    k: int
    errors: list[float]
    tolerance: float
    signs_ok: bool

    @property
    def exactness_degree(self) -> int:
        return 2 * self.r - self.k

    @property
    def passed(self) -> bool:
        exact = all(e <= self.tolerance for e in self.errors[: self.exactness_degree + 1])
        return exact and self.signs_ok

    @property
    def first_failure(self) -> Optional[int]:
        for degree, error in enumerate(self.errors):
            if error > self.tolerance:
                return degree
        return None

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "k": self.k,
            "exactness_degree": self.exactness_degree,
            "errors": self.errors,
            "passed": self.passed,
            "first_failure": self.first_failure,
            "signs_ok": self.signs_ok,
        }


def _monomial_derivative(m: int, i: int, x: int) -> int:
    if i > m:
        return 0
    return factorial(m) // factorial(m - i) * x ** (m - i)


def verify_exactness(rule: VtdQuadrature, tolerance: Optional[float] = None) -> ExactnessReport:
    """Integrate x^m on [-1, 1] for m = 0..2r-k+1 and record the errors."""
    ctx = nk.active()
    if tolerance is None:
        tolerance = float(1e6 * ctx.eps) if ctx.extended else 1e-11
    errors = []
    for m in range(rule.exactness_degree + 2):
        total = 0
        for i, w in enumerate(rule.left_weights):
            total = total + w * _monomial_derivative(m, i, -1)
        for x, w in zip(rule.nodes, rule.interior_weights):
            total = total + w * x ** m
        for i, w in enumerate(rule.right_weights):
            total = total + w * _monomial_derivative(m, i, 1)
        exact = ctx.ratio(2, m + 1) if m % 2 == 0 else ctx.scalar(0)
        errors.append(float(abs(total - exact) / max(abs(exact), 1)))
    return ExactnessReport(rule.r, rule.k, errors, tolerance, rule.signs_ok())
