"""Grid fields, coefficient matrices, and problem specifications.

Coefficients, penalties, obstacle, and Dirichlet data are closed-form
expression trees (see :mod:`thinlab.expressions`) rather than nodal
arrays: the obstacle extension and the radial divergence term both consume
analytic derivatives of a^{ij}.  Grid fields carry nodal values and
evaluate anywhere in the closed half-domain through multilinear
interpolation; their point gradients come from shifted 4th-order stencils
applied to the interpolant.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import expressions as ex
from . import geometry
from .errors import SpecError
from .geometry import Grid

__all__ = [
    "ScalarField",
    "CoefficientField",
    "ProblemSpec",
    "ValidationCheck",
    "ValidationReport",
    "validate_spec",
    "mu_at",
    "b_at",
    "div_b_radial",
]


@dataclass
class ScalarField:
    """Nodal scalar field on a half-cube grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise SpecError(
                f"values shape {self.values.shape} does not match grid {self.grid.shape}"
            )
        if not np.isfinite(self.values).all():
            raise SpecError("field has non-finite nodal values")

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "ScalarField":
        vals = np.asarray(fn(grid.nodes()), dtype=float).reshape(grid.shape)
        return cls(grid, vals)

    def evaluate(self, points):
        return geometry.interpolate(self, points)

    def gradient(self, points):
        return geometry.gradient(self, points)

    def slab_values(self) -> np.ndarray:
        return self.values[self.grid.slab_multi_index()]

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        return ScalarField(self.grid, self.values - other.values)

    def __add__(self, other: "ScalarField") -> "ScalarField":
        return ScalarField(self.grid, self.values + other.values)

    def max_abs(self) -> float:
        return float(np.abs(self.values).max())


class CoefficientField:
    """Symmetric coefficient matrix A(x) = [a^{ij}] of expression trees.

    ``ellipticity`` is the declared pair (lambda, Lambda); ``lipschitz_bound``
    is declared as well and spot-verified by sampling (exact constants of
    expression trees are not computable in general).
    """

    def __init__(self, entries, ellipticity=(1.0, 1.0), lipschitz_bound=0.0):
        entries = [list(row) for row in entries]
        n = len(entries)
        if any(len(row) != n for row in entries):
            raise SpecError("coefficient matrix must be square")
        parsed = [
            [e if isinstance(e, ex.Expr) else ex.parse_expression(e) for e in row]
            for row in entries
        ]
        self.dim = n
        self.entries = parsed
        self.ellipticity = (float(ellipticity[0]), float(ellipticity[1]))
        self.lipschitz_bound = float(lipschitz_bound)
        self._deriv_cache: dict = {}

    @classmethod
    def identity(cls, dim: int) -> "CoefficientField":
        entries = [
            [ex.const(1.0 if i == j else 0.0) for j in range(dim)] for i in range(dim)
        ]
        return cls(entries, ellipticity=(1.0, 1.0), lipschitz_bound=0.0)

    def is_constant(self) -> bool:
        return all(e.is_constant() for row in self.entries for e in row)

    def entry_derivative(self, i: int, j: int, axis: int) -> ex.Expr:
        key = (i, j, axis)
        if key not in self._deriv_cache:
            self._deriv_cache[key] = self.entries[i][j].d(axis)
        return self._deriv_cache[key]

    # vectorized evaluation ---------------------------------------------
    def matrices(self, points) -> np.ndarray:
        """A at each point, shape (N, n, n)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = self.dim
        out = np.empty((points.shape[0], n, n))
        for i in range(n):
            for j in range(n):
                out[:, i, j] = self.entries[i][j].ev(points)
        return out

    def mu(self, points) -> np.ndarray:
        """mu(x) = a^{ij} x_i x_j / |x|^2, with mu(0) = 1 by continuity."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        r2 = np.einsum("pi,pi->p", points, points)
        A = self.matrices(points)
        quad = np.einsum("pi,pij,pj->p", points, A, points)
        out = np.ones(points.shape[0])
        nz = r2 > 0.0
        out[nz] = quad[nz] / r2[nz]
        return out

    def b(self, points) -> np.ndarray:
        """b(x) = A(x) - I, shape (N, n, n)."""
        A = self.matrices(points)
        return A - np.eye(self.dim)

    def div_b_radial(self, points) -> np.ndarray:
        """sum_i D_i(b^{ij} x_j / |x|) from analytic entry derivatives.

        Using D_i(x_j/|x|) = delta_ij/|x| - x_i x_j/|x|^3 this equals
        sum_ij D_i b^{ij} x_j/|x| + (tr b)/|x| - (mu - 1)/|x|.
        Singular at x = 0 (never queried there: the integrand lives on
        hemispheres of positive radius).
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.sqrt(np.einsum("pi,pi->p", points, points))
        if np.any(r == 0.0):
            raise SpecError("div_b_radial is singular at the origin")
        n = self.dim
        term = np.zeros(points.shape[0])
        for i in range(n):
            for j in range(n):
                term += self.entry_derivative(i, j, i).ev(points) * points[:, j]
        term /= r
        B = self.b(points)
        trace = np.einsum("pii->p", B)
        mu = self.mu(points)
        return term + trace / r - (mu - 1.0) / r


# spec-facing point wrappers -------------------------------------------------

def mu_at(A: CoefficientField, x) -> float:
    return float(A.mu(np.asarray(x, dtype=float)[None, :])[0])


def b_at(A: CoefficientField, x) -> np.ndarray:
    return A.b(np.asarray(x, dtype=float)[None, :])[0]


def div_b_radial(A: CoefficientField, x) -> float:
    return float(A.div_b_radial(np.asarray(x, dtype=float)[None, :])[0])


# ---------------------------------------------------------------------------
# problem specification


def _as_expr(rule) -> ex.Expr:
    return rule if isinstance(rule, ex.Expr) else ex.parse_expression(str(rule))


@dataclass
class ProblemSpec:
    """Data of one two-penalty boundary obstacle instance.

    ``k_plus``/``k_minus`` and ``h`` are boundary rules in x1..x_{n-1};
    ``dirichlet_g`` is evaluated on the outer faces of the half-cube.
    """

    grid: Grid
    A: CoefficientField
    k_plus: ex.Expr
    k_minus: ex.Expr
    h: ex.Expr
    p: float
    kappa: int
    dirichlet_g: ex.Expr

    def __post_init__(self):
        self.k_plus = _as_expr(self.k_plus)
        self.k_minus = _as_expr(self.k_minus)
        self.h = _as_expr(self.h)
        self.dirichlet_g = _as_expr(self.dirichlet_g)
        self.p = float(self.p)
        self.kappa = int(self.kappa)
        if self.A.dim != self.grid.dim:
            raise SpecError("coefficient dimension does not match the grid")

    def with_k_minus(self, rule) -> "ProblemSpec":
        return ProblemSpec(
            grid=self.grid, A=self.A, k_plus=self.k_plus, k_minus=_as_expr(rule),
            h=self.h, p=self.p, kappa=self.kappa, dirichlet_g=self.dirichlet_g,
        )


# ---------------------------------------------------------------------------
# hypothesis validation


@dataclass
class ValidationCheck:
    name: str
    passed: bool
    worst: float
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list = dc_field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed_names(self):
        return [c.name for c in self.checks if not c.passed]

    def __str__(self):
        lines = []
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            lines.append(f"[{status}] {c.name}: worst={c.worst:.3e} {c.detail}")
        return "\n".join(lines)


def validate_spec(spec: ProblemSpec, n_samples: int = 2000, seed: int = 0) -> ValidationReport:
    """Check the structural hypotheses of a spec by dense sampling.

    Reported checks: symmetry of A, two-sided ellipticity with the declared
    (lambda, Lambda), A(0) = I, a^{in} = 0 on the slab, k+- >= 0 on the
    slab, p >= 2, kappa >= 1, and the sampled Lipschitz bound.  A failed
    check blocks solver entry (the solver asserts report.passed).
    """
    rng = np.random.default_rng(seed)
    n = spec.grid.dim
    report = ValidationReport()

    pts = rng.uniform(-1.0, 1.0, size=(n_samples, n))
    pts[:, n - 1] = np.abs(pts[:, n - 1])
    A = spec.A.matrices(pts)

    asym = float(np.abs(A - np.swapaxes(A, 1, 2)).max())
    report.checks.append(ValidationCheck("symmetry a^ij = a^ji", asym <= 1e-12, asym))

    lam, Lam = spec.A.ellipticity
    eigs = np.linalg.eigvalsh(0.5 * (A + np.swapaxes(A, 1, 2)))
    low = float(eigs.min())
    high = float(eigs.max())
    report.checks.append(
        ValidationCheck(
            "ellipticity lambda <= A <= Lambda",
            low >= lam - 1e-10 and high <= Lam + 1e-10,
            max(lam - low, high - Lam),
            f"sampled eigenvalue range [{low:.6g}, {high:.6g}]",
        )
    )

    A0 = spec.A.matrices(np.zeros((1, n)))[0]
    dev0 = float(np.abs(A0 - np.eye(n)).max())
    report.checks.append(ValidationCheck("normalization A(0) = I", dev0 <= 1e-12, dev0))

    slab = pts.copy()
    slab[:, n - 1] = 0.0
    Aslab = spec.A.matrices(slab)
    mix = float(np.abs(Aslab[:, : n - 1, n - 1]).max())
    report.checks.append(
        ValidationCheck("boundary normalization a^in = 0 on slab", mix <= 1e-12, mix)
    )

    kp = spec.k_plus.ev(slab)
    km = spec.k_minus.ev(slab)
    kmin = float(min(kp.min(), km.min()))
    report.checks.append(ValidationCheck("penalties k+- >= 0 on slab", kmin >= -1e-14, -kmin))

    report.checks.append(ValidationCheck("exponent p >= 2", spec.p >= 2.0, 2.0 - spec.p))
    report.checks.append(
        ValidationCheck("truncation order kappa >= 1", spec.kappa >= 1, float(1 - spec.kappa))
    )

    # sampled difference quotients against the declared Lipschitz bound
    m = min(1000, n_samples)
    x = pts[:m]
    y = x + rng.uniform(-0.05, 0.05, size=x.shape)
    y = np.clip(y, spec.grid.lows(), spec.grid.highs())
    dist = np.linalg.norm(x - y, axis=1)
    keep = dist > 1e-8
    diff = np.abs(spec.A.matrices(x[keep]) - spec.A.matrices(y[keep])).max(axis=(1, 2))
    quot = float((diff / dist[keep]).max()) if keep.any() else 0.0
    report.checks.append(
        ValidationCheck(
            "declared Lipschitz bound (sampled)",
            quot <= spec.A.lipschitz_bound + 1e-9,
            quot - spec.A.lipschitz_bound,
            f"sampled quotient {quot:.6g} vs declared {spec.A.lipschitz_bound:.6g}",
        )
    )
    return report
