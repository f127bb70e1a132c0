"""Polynomial obstacle extension and problem normalization.

Given boundary data h on the slab and coefficients a^{ij}, the extension
h_bar is the unique polynomial of degree <= kappa whose trace is the
degree-kappa Taylor polynomial of h at 0, whose first vertical layer
vanishes (D_n h_bar = 0 on the slab), and whose remaining layers solve the
layer-by-layer recurrence that kills D_i(a^{ij} D_j h_bar) to order
kappa - 2 in x_n.  Subtracting

    h_tilde(x) = h_bar(x', x_n) - h_bar(x', 0) + h(x')

from a solution u produces the normalized field v = u - h_tilde with
v = u - h exactly on the slab and forcing f = -D_i(a^{ij} D_j h_tilde)
bounded by C |x|^{kappa-1}.

Polynomial division by the zero layer of a^{nn} is realized as
multiplication by the truncated Taylor expansion of its reciprocal about 0;
the remainder the recurrence discards is exactly the error term the layer
construction absorbs.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from . import expressions as ex
from .errors import SpecError
from .fields import CoefficientField, ProblemSpec, ScalarField

__all__ = [
    "Polynomial",
    "NormalizedProblem",
    "taylor_of_expression",
    "extend_obstacle",
    "normalize",
    "check_f_growth",
]

_ZERO_TOL = 0.0  # keep coefficients exact; drop only true zeros


class Polynomial:
    """Multivariate polynomial as a multi-index -> coefficient map."""

    def __init__(self, dim: int, coefficients=None):
        self.dim = int(dim)
        self.coefficients: dict = {}
        if coefficients:
            for alpha, c in dict(coefficients).items():
                self._set(tuple(int(a) for a in alpha), float(c))

    def _set(self, alpha, c):
        if len(alpha) != self.dim:
            raise SpecError(f"multi-index {alpha} has wrong length for dim {self.dim}")
        if c != _ZERO_TOL:
            self.coefficients[alpha] = self.coefficients.get(alpha, 0.0) + c
            if self.coefficients[alpha] == 0.0:
                del self.coefficients[alpha]

    @classmethod
    def zero(cls, dim):
        return cls(dim)

    @classmethod
    def monomial(cls, dim, alpha, c=1.0):
        return cls(dim, {tuple(alpha): c})

    @property
    def degree(self) -> int:
        if not self.coefficients:
            return 0
        return max(sum(a) for a in self.coefficients)

    def is_zero(self) -> bool:
        return not self.coefficients

    def __add__(self, other):
        out = Polynomial(self.dim, self.coefficients)
        for alpha, c in other.coefficients.items():
            out._set(alpha, c)
        return out

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def scale(self, c: float) -> "Polynomial":
        return Polynomial(self.dim, {a: v * c for a, v in self.coefficients.items()})

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        out = Polynomial(self.dim)
        for a1, c1 in self.coefficients.items():
            for a2, c2 in other.coefficients.items():
                out._set(tuple(x + y for x, y in zip(a1, a2)), c1 * c2)
        return out

    def truncate(self, max_degree: int) -> "Polynomial":
        return Polynomial(
            self.dim,
            {a: c for a, c in self.coefficients.items() if sum(a) <= max_degree},
        )

    def diff(self, axis: int) -> "Polynomial":
        out = Polynomial(self.dim)
        for alpha, c in self.coefficients.items():
            if alpha[axis] > 0:
                beta = list(alpha)
                beta[axis] -= 1
                out._set(tuple(beta), c * alpha[axis])
        return out

    def evaluate(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(points.shape[0])
        for alpha, c in self.coefficients.items():
            term = np.full(points.shape[0], c)
            for ax, a in enumerate(alpha):
                if a:
                    term = term * points[:, ax] ** a
            out += term
        return out

    def __call__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            return float(self.evaluate(pts[None, :])[0])
        return self.evaluate(pts)

    def coefficient(self, alpha) -> float:
        return self.coefficients.get(tuple(alpha), 0.0)

    def xn_layer(self, k: int) -> "Polynomial":
        """Layer h_k(x') with x_n-exponent k, returned in dim-1 variables."""
        out = Polynomial(self.dim - 1)
        for alpha, c in self.coefficients.items():
            if alpha[-1] == k:
                out._set(alpha[:-1], c)
        return out

    def drop_vertical(self) -> "Polynomial":
        """Restriction to the slab: keep only terms with x_n-exponent 0."""
        out = Polynomial(self.dim)
        for alpha, c in self.coefficients.items():
            if alpha[-1] == 0:
                out._set(alpha, c)
        return out

    def lift(self, new_dim: int, xn_power: int = 0) -> "Polynomial":
        """Embed a dim-(new_dim-1) polynomial as p(x') * x_n^xn_power."""
        if self.dim != new_dim - 1:
            raise SpecError("lift expects a polynomial in the slab variables")
        out = Polynomial(new_dim)
        for alpha, c in self.coefficients.items():
            out._set(alpha + (xn_power,), c)
        return out

    def compose_linear(self, matrix) -> "Polynomial":
        """p(M y) as a polynomial in y; M has shape (dim, dim)."""
        matrix = np.asarray(matrix, dtype=float)
        rows = []
        for i in range(self.dim):
            row = Polynomial(self.dim)
            for j in range(self.dim):
                if matrix[i, j] != 0.0:
                    alpha = [0] * self.dim
                    alpha[j] = 1
                    row._set(tuple(alpha), matrix[i, j])
            rows.append(row)
        out = Polynomial(self.dim)
        for alpha, c in self.coefficients.items():
            term = Polynomial(self.dim, {(0,) * self.dim: c})
            for ax, a in enumerate(alpha):
                for _ in range(a):
                    term = term * rows[ax]
            out = out + term
        return out

    # serialization ------------------------------------------------------
    def to_json(self) -> str:
        items = sorted(self.coefficients.items())
        return json.dumps([[list(a), c] for a, c in items])

    @classmethod
    def from_json(cls, text: str, dim: int) -> "Polynomial":
        return cls(dim, {tuple(a): c for a, c in json.loads(text)})

    def __repr__(self):
        items = sorted(self.coefficients.items())
        body = " + ".join(f"{c:g}*x^{a}" for a, c in items) or "0"
        return f"Polynomial({body})"


def _multi_indices(dim: int, max_degree: int):
    for alpha in itertools.product(range(max_degree + 1), repeat=dim):
        if sum(alpha) <= max_degree:
            yield alpha


def taylor_of_expression(expr: ex.Expr, dim: int, order: int) -> Polynomial:
    """Taylor polynomial of an expression tree at the origin, analytic derivatives."""
    origin = np.zeros((1, dim))
    cache: dict = {(0,) * dim: expr}

    def deriv(alpha):
        alpha = tuple(alpha)
        if alpha in cache:
            return cache[alpha]
        ax = next(i for i, a in enumerate(alpha) if a > 0)
        parent = list(alpha)
        parent[ax] -= 1
        node = deriv(tuple(parent)).d(ax)
        cache[alpha] = node
        return node

    out = Polynomial(dim)
    for alpha in _multi_indices(dim, order):
        value = float(deriv(alpha).ev(origin)[0])
        if value != 0.0:
            fact = 1.0
            for a in alpha:
                for k in range(2, a + 1):
                    fact *= k
            out._set(alpha, value / fact)
    return out


def _reciprocal_taylor(p: Polynomial, order: int) -> Polynomial:
    """Truncated Taylor expansion of 1/p about 0; p(0) must be nonzero."""
    c0 = p.coefficient((0,) * p.dim)
    if c0 == 0.0:
        raise SpecError("a^nn vanishes at the origin (ellipticity violated)")
    q = p.scale(1.0 / c0) - Polynomial(p.dim, {(0,) * p.dim: 1.0})
    out = Polynomial(p.dim, {(0,) * p.dim: 1.0})
    power = Polynomial(p.dim, {(0,) * p.dim: 1.0})
    sign = 1.0
    for _ in range(1, order + 1):
        power = (power * q).truncate(order)
        sign = -sign
        out = out + power.scale(sign)
        if power.is_zero():
            break
    return out.scale(1.0 / c0).truncate(order)


def extend_obstacle(A: CoefficientField, h, kappa: int) -> Polynomial:
    """Extension h_bar of the obstacle's Taylor polynomial, degree <= kappa.

    The trace h_bar(x', 0) is the degree-kappa Taylor polynomial of h at 0,
    the first layer vanishes identically, and each higher layer is produced
    by the unique layer recurrence; the division by the zero layer of a^nn
    is a truncated reciprocal expansion, with the discarded remainder being
    the construction's error term.
    """
    if kappa < 1:
        raise SpecError("kappa must be >= 1")
    n = A.dim
    h_expr = h if isinstance(h, ex.Expr) else ex.parse_expression(str(h))
    if h_expr.max_var() >= n - 1:
        raise SpecError("obstacle rule must use slab variables x1..x_{n-1} only")

    # vertical layers of the degree-(kappa-1) Taylor polynomials of a^{ij}
    a_layers = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            tp = taylor_of_expression(A.entries[i][j], n, kappa - 1)
            a_layers[i][j] = [tp.xn_layer(k) for k in range(kappa)]

    h_layers = [Polynomial(n - 1) for _ in range(kappa + 1)]
    h_layers[0] = taylor_of_expression(h_expr, n - 1, kappa)
    # h_layers[1] stays zero: D_n h_bar = 0 on the slab

    recip = _reciprocal_taylor(a_layers[n - 1][n - 1][0], kappa)

    for k in range(0, kappa - 1):
        rhs = Polynomial(n - 1)
        for ell in range(0, k + 1):
            for i in range(n - 1):
                for j in range(n - 1):
                    rhs = rhs + (a_layers[i][j][k - ell] * h_layers[ell].diff(j)).diff(i)
            for i in range(n - 1):
                rhs = rhs + (
                    (a_layers[i][n - 1][k - ell] * h_layers[ell + 1]).diff(i)
                ).scale(ell + 1.0)
            rhs = rhs + (a_layers[n - 1][n - 1][k - ell + 1] * h_layers[ell + 1]).scale(
                (ell + 1.0) * (k + 1.0)
            )
        for ell in range(0, k + 2):
            for j in range(n - 1):
                rhs = rhs + (a_layers[n - 1][j][k - ell + 1] * h_layers[ell].diff(j)).scale(
                    k + 1.0
                )
        factor = -1.0 / ((k + 1.0) * (k + 2.0))
        h_layers[k + 2] = (recip * rhs).scale(factor).truncate(kappa - (k + 2))

    out = Polynomial(n)
    for k, layer in enumerate(h_layers):
        if not layer.is_zero():
            out = out + layer.lift(n, k)
    return out


@dataclass
class ExtensionCalculus:
    """Extension h_bar with callable h_tilde, its gradient, and the forcing."""

    h_bar: Polynomial
    h_tilde: object            # callable on (N, n) points
    h_tilde_gradient: object   # callable on (N, n) points -> (N, n)
    f_eval: object             # analytic -D_i(a^{ij} D_j h_tilde)


def extension_calculus(A: CoefficientField, h, kappa: int) -> ExtensionCalculus:
    """Build h_bar, h_tilde = h_bar - h_bar(.,0) + h, and the analytic forcing.

    Everything is evaluated from expression trees and polynomial
    derivatives, so the forcing is available off-node with no interpolation
    error.
    """
    n = A.dim
    h_expr = h if isinstance(h, ex.Expr) else ex.parse_expression(str(h))
    h_bar = extend_obstacle(A, h_expr, kappa)
    h_bar0 = h_bar.drop_vertical()

    dh_bar = [h_bar.diff(ax) for ax in range(n)]
    d2h_bar = [[dh_bar[i].diff(j) for j in range(n)] for i in range(n)]
    dh_bar0 = [h_bar0.diff(ax) for ax in range(n)]
    d2h_bar0 = [[dh_bar0[i].diff(j) for j in range(n)] for i in range(n)]
    dh = [h_expr.d(ax) for ax in range(n - 1)]
    d2h = [[dh[i].d(j) for j in range(n - 1)] for i in range(n - 1)]

    def h_tilde(points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return h_bar.evaluate(pts) - h_bar0.evaluate(pts) + h_expr.ev(pts)

    def grad_h_tilde(points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros_like(pts)
        for ax in range(n):
            out[:, ax] = dh_bar[ax].evaluate(pts) - dh_bar0[ax].evaluate(pts)
            if ax < n - 1:
                out[:, ax] += dh[ax].ev(pts)
        return out

    def hess_h_tilde(points, i, j):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = d2h_bar[i][j].evaluate(pts) - d2h_bar0[i][j].evaluate(pts)
        if i < n - 1 and j < n - 1:
            out = out + d2h[i][j].ev(pts)
        return out

    def f_eval(points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        grad = grad_h_tilde(pts)
        out = np.zeros(pts.shape[0])
        for i in range(n):
            for j in range(n):
                out += A.entry_derivative(i, j, i).ev(pts) * grad[:, j]
                out += A.entries[i][j].ev(pts) * hess_h_tilde(pts, i, j)
        return -out

    return ExtensionCalculus(
        h_bar=h_bar, h_tilde=h_tilde, h_tilde_gradient=grad_h_tilde, f_eval=f_eval
    )


@dataclass
class NormalizedProblem:
    """Normalized field v = u - h_tilde with its forcing and extension data."""

    v: ScalarField
    f: ScalarField
    h_bar: Polynomial
    h_tilde: object            # callable on (N, n) points
    h_tilde_gradient: object   # callable on (N, n) points -> (N, n)
    f_eval: object             # analytic forcing, callable on (N, n) points
    kappa: int
    f_growth_constant: float
    f_growth_pass: bool


def normalize(spec: ProblemSpec, u: ScalarField) -> NormalizedProblem:
    """Subtract the extended obstacle and build the forcing analytically.

    v = u - h_tilde nodally; on the slab h_tilde(x', 0) = h(x') exactly so
    v = u - h there.
    """
    calc = extension_calculus(spec.A, spec.h, spec.kappa)
    nodes = spec.grid.nodes()
    v = ScalarField(spec.grid, u.values - calc.h_tilde(nodes).reshape(spec.grid.shape))
    f = ScalarField(spec.grid, calc.f_eval(nodes).reshape(spec.grid.shape))
    constant, passed = check_f_growth(f, spec.kappa)
    return NormalizedProblem(
        v=v, f=f, h_bar=calc.h_bar, h_tilde=calc.h_tilde,
        h_tilde_gradient=calc.h_tilde_gradient,
        f_eval=calc.f_eval, kappa=spec.kappa,
        f_growth_constant=constant, f_growth_pass=passed,
    )


def check_f_growth(f: ScalarField, kappa: int):
    """sup over non-origin nodes of |f| / |x|^(kappa-1), with a divergence flag.

    The constant is the nodal supremum.  The pass flag compares the inner
    shell (|x| < 4h) against the rest: a ratio that keeps growing toward
    the origin marks an unbounded |x|^(1-kappa) |f|.
    """
    grid = f.grid
    nodes = grid.nodes()
    r = np.linalg.norm(nodes, axis=1)
    vals = np.abs(f.values.ravel())
    keep = r > 0.0
    ratio = vals[keep] / r[keep] ** (kappa - 1)
    if ratio.size == 0:
        return 0.0, True
    constant = float(ratio.max())
    if constant == 0.0:
        return 0.0, True
    h = grid.spacing
    inner = r[keep] < 4.0 * h
    c_in = float(ratio[inner].max()) if inner.any() else 0.0
    c_out = float(ratio[~inner].max()) if (~inner).any() else 0.0
    passed = c_in <= 2.0 * c_out or c_in == 0.0
    return constant, bool(passed)
