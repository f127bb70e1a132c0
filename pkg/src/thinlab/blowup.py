"""Blow-up rescalings, frequency estimation, and tangent polynomial fits.

At a slab point x0 the Almgren rescaling v_rho(y) = v(x0 + rho y) / H(rho)^(1/2)
normalizes the boundary L2 mass on the unit hemisphere to 1; the homogeneous
rescaling divides by rho^nu instead.  As rho drops, the rescaled fields
approach an even homogeneous polynomial annihilated by the frozen-coefficient
operator a^{ij}(x0) D_ij; the fit projects hemisphere samples from the
smallest rungs onto an explicit basis of that kernel.

The invariant subspace S of a tangent polynomial is the set of slab
directions z with z . grad v* identically zero, computed as the null space
of the matrix taking z to the coefficient vector of z . grad v*; its
dimension never exceeds n - 2 for a nonzero even tangent (a tangent
depending on x_n alone cannot be both even and annihilated).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import geometry
from .diagnostics import FrequencyProfile, RadiusLadder
from .errors import (
    DegenerateNormalizationError,
    InternalInconsistencyError,
    ResolutionError,
    SpecError,
)
from .fields import CoefficientField, ScalarField
from .taylor import Polynomial

__all__ = [
    "Rescaling",
    "TangentPolynomial",
    "FrequencyEstimate",
    "rescale",
    "estimate_frequency",
    "fit_tangent",
    "invariant_subspace",
    "tangent_continuity_report",
    "even_harmonic_basis",
]


# ---------------------------------------------------------------------------
# rescalings


@dataclass
class Rescaling:
    base_point: np.ndarray
    rho: float
    mode: str                  # "almgren" or "homogeneous"
    nu: float | None
    field: ScalarField
    normalization: float       # divisor applied to v(x0 + rho y)

    def hemisphere_mass(self, A: CoefficientField, angular_count: int = 128) -> float:
        """Integral of mu(x0 + rho y) v_rho(y)^2 over the unit hemisphere."""
        q = geometry.hemisphere_quadrature(self.field.grid.dim, 1.0, angular_count)
        mu = A.mu(self.base_point + self.rho * q.nodes)
        vals = self.field.evaluate(q.nodes)
        return q.integrate(mu * vals ** 2)


def rescale(v, x0, rho: float, mode, A: CoefficientField | None = None,
            window_cells: int | None = None) -> Rescaling:
    """Sample a rescaled window field on a fresh unit half-cube grid.

    mode is "almgren" or ("homogeneous", nu).  The window [-1,1]^{n-1} x [0,1]
    around x0 scaled by rho must stay inside the source domain, which holds
    for rho <= 0.45 when |x0| <= 0.45 in the max norm.
    """
    x0 = np.asarray(x0, dtype=float)
    n = len(x0)
    if abs(x0[-1]) > 1e-14:
        raise SpecError("rescaling base points live on the slab")
    if np.abs(x0).max() + rho > 1.0 + 1e-12:
        raise ResolutionError(
            f"window of radius {rho} at {x0} leaves the half-domain"
        )
    if A is None:
        A = CoefficientField.identity(n)

    if mode == "almgren":
        q = geometry.hemisphere_quadrature(n, rho, 128)
        vals = np.asarray(v.evaluate(x0 + q.nodes), dtype=float)
        H = rho ** (1 - n) * q.integrate(A.mu(x0 + q.nodes) * vals ** 2)
        if H <= 0.0:
            raise DegenerateNormalizationError(
                "hemisphere L2 mass vanishes; Almgren rescaling undefined"
            )
        denom = float(np.sqrt(H))
        nu = None
    else:
        tag, nu = mode
        if tag != "homogeneous":
            raise SpecError(f"unknown rescaling mode {mode!r}")
        denom = rho ** float(nu)

    if window_cells is None:
        src = getattr(v, "grid", None)
        window_cells = src.cells_per_axis if src is not None else 65
    wgrid = geometry.build_grid(n, window_cells)
    nodes = wgrid.nodes()
    values = np.asarray(v.evaluate(x0 + rho * nodes), dtype=float) / denom
    field = ScalarField(wgrid, values.reshape(wgrid.shape))
    return Rescaling(
        base_point=x0, rho=float(rho),
        mode=mode if isinstance(mode, str) else "homogeneous",
        nu=None if mode == "almgren" else float(nu),
        field=field, normalization=denom,
    )


# ---------------------------------------------------------------------------
# frequency estimation


@dataclass
class FrequencyEstimate:
    nu_hat: float
    nu_int: int
    confidence: float
    truncation_limited: bool = False

    def __str__(self):
        flag = " [truncation-limited]" if self.truncation_limited else ""
        return (
            f"frequency {self.nu_hat:.4f} ~ {self.nu_int} "
            f"(confidence {self.confidence:.2f}){flag}"
        )


def estimate_frequency(profile: FrequencyProfile) -> FrequencyEstimate:
    """Extrapolate the frequency from the smallest reliable rungs.

    A weighted linear fit of Phi against rho over the 4 smallest rungs on
    the untruncated branch gives nu_hat as the rho -> 0 intercept; when the
    truncation branch is active on every small rung the point is reported
    truncation-limited at nu = kappa (the detectable ceiling).
    """
    rhos = profile.rho_values
    if len(rhos) < 6:
        raise ResolutionError("frequency estimation needs at least 6 rungs")
    truncated = profile.truncation_active()
    usable = np.flatnonzero(~truncated)
    small4 = np.argsort(rhos)[:4]
    if not np.any(~truncated[small4]):
        return FrequencyEstimate(
            nu_hat=float(profile.kappa), nu_int=int(profile.kappa),
            confidence=0.0, truncation_limited=True,
        )
    pick = usable[np.argsort(rhos[usable])][:4]
    x = rhos[pick]
    y = profile.Phi[pick]
    w = 1.0 / x
    W = np.diag(w)
    Vand = np.stack([np.ones_like(x), x], axis=1)
    coef, *_ = np.linalg.lstsq(W @ Vand, w * y, rcond=None)
    nu_hat = float(coef[0])
    nu_int = int(round(nu_hat))
    confidence = float(np.clip(1.0 - 2.0 * abs(nu_hat - nu_int), 0.0, 1.0))
    return FrequencyEstimate(nu_hat=nu_hat, nu_int=max(nu_int, 0), confidence=confidence)


# ---------------------------------------------------------------------------
# tangent polynomials


def _even_monomials(dim: int, nu: int):
    out = []
    for alpha in itertools.product(range(nu + 1), repeat=dim):
        if sum(alpha) == nu and alpha[-1] % 2 == 0:
            out.append(alpha)
    return sorted(out)


def even_harmonic_basis(dim: int, nu: int, a0=None) -> list:
    """Basis of even degree-nu homogeneous polynomials killed by a0^{ij} D_ij.

    a0 defaults to the identity (ordinary harmonicity).  Returned as
    Polynomial objects spanning the kernel of the constant-coefficient
    operator restricted to the even monomial span.
    """
    a0 = np.eye(dim) if a0 is None else np.asarray(a0, dtype=float)
    monos = _even_monomials(dim, nu)
    if nu < 2:
        return [Polynomial.monomial(dim, m) for m in monos]
    rows = sorted(
        alpha for alpha in itertools.product(range(nu - 1), repeat=dim)
        if sum(alpha) == nu - 2
    )
    row_index = {a: i for i, a in enumerate(rows)}
    C = np.zeros((len(rows), len(monos)))
    for col, alpha in enumerate(monos):
        P = Polynomial.monomial(dim, alpha)
        LP = Polynomial(dim)
        for i in range(dim):
            for j in range(dim):
                if a0[i, j] != 0.0:
                    LP = LP + P.diff(i).diff(j).scale(a0[i, j])
        for beta, c in LP.coefficients.items():
            C[row_index[beta], col] = c
    kernel = scipy.linalg.null_space(C)
    basis = []
    for k in range(kernel.shape[1]):
        basis.append(Polynomial(dim, {m: kernel[m_idx, k]
                                      for m_idx, m in enumerate(monos)
                                      if kernel[m_idx, k] != 0.0}))
    return basis


@dataclass
class TangentPolynomial:
    """Even homogeneous degree-nu polynomial tangent with invariance data."""

    nu: int
    dim: int
    polynomial: Polynomial
    harmonic_residual: float
    invariant_dim: int
    invariant_basis: np.ndarray
    fit_residual: float = 0.0
    nondegenerate: bool = True
    growth_lower_bound: float = 0.0
    monneau_series: np.ndarray | None = None

    @property
    def coefficients(self) -> dict:
        return dict(self.polynomial.coefficients)

    def evaluate(self, points):
        return self.polynomial.evaluate(points)

    def coefficient_vector(self) -> np.ndarray:
        monos = _even_monomials(self.dim, self.nu)
        return np.array([self.polynomial.coefficient(m) for m in monos])

    def to_json(self) -> str:
        items = sorted(self.polynomial.coefficients.items())
        return json.dumps({
            "nu": self.nu,
            "d": self.invariant_dim,
            "coefficients": [[list(a), c] for a, c in items],
            "harmonic_residual": self.harmonic_residual,
        })


def fit_tangent(
    v,
    x0,
    nu: int,
    ladder: RadiusLadder,
    a0=None,
    angular_count: int = 128,
    rng_seed: int = 0,
) -> TangentPolynomial:
    """Least-squares tangent fit from the smallest rungs' hemispheres.

    Samples rho^-nu v(x0 + rho y) on the unit hemisphere for the 3 smallest
    ladder rungs and projects onto the even degree-nu a0-harmonic basis,
    weighting by the quadrature.  The nondegeneracy flag fires when the
    fitted polynomial is smaller than 1e-6 of the sampled field scale.
    """
    x0 = np.asarray(x0, dtype=float)
    n = len(x0)
    if nu < 1:
        raise SpecError("tangent degree nu must be >= 1")
    basis = even_harmonic_basis(n, nu, a0)
    if not basis:
        raise SpecError(f"no even degree-{nu} basis for this coefficient matrix")

    q = geometry.hemisphere_quadrature(n, 1.0, angular_count)
    sw = np.sqrt(q.weights)
    rungs = np.sort(ladder.rho_values)[:3]
    rows = []
    rhs = []
    sup_scaled = []
    for rho in rungs:
        vals = np.asarray(v.evaluate(x0 + rho * q.nodes), dtype=float) / rho ** nu
        sup_scaled.append(float(np.abs(vals).max()))
        design = np.stack([b.evaluate(q.nodes) for b in basis], axis=1)
        rows.append(design * sw[:, None])
        rhs.append(vals * sw)
    Amat = np.concatenate(rows, axis=0)
    bvec = np.concatenate(rhs)
    coef, *_ = np.linalg.lstsq(Amat, bvec, rcond=None)
    residual = float(np.linalg.norm(Amat @ coef - bvec))

    poly = Polynomial(n)
    for c, b in zip(coef, basis):
        poly = poly + b.scale(float(c))

    # residual of the frozen-coefficient operator on random sphere samples
    a0m = np.eye(n) if a0 is None else np.asarray(a0, dtype=float)
    rng = np.random.default_rng(rng_seed)
    samples = rng.standard_normal((64, n))
    samples /= np.linalg.norm(samples, axis=1)[:, None]
    LP = Polynomial(n)
    for i in range(n):
        for j in range(n):
            if a0m[i, j] != 0.0:
                LP = LP + poly.diff(i).diff(j).scale(a0m[i, j])
    harmonic_residual = float(np.abs(LP.evaluate(samples)).max()) if not LP.is_zero() else 0.0

    scale = max(sup_scaled) if sup_scaled else 0.0
    pnorm = float(np.linalg.norm(coef))
    nondegenerate = pnorm >= 1e-6 * scale and scale > 0.0
    growth_lower_bound = min(sup_scaled) if sup_scaled else 0.0

    d, zbasis = invariant_subspace_of(poly, n)
    return TangentPolynomial(
        nu=int(nu), dim=n, polynomial=poly,
        harmonic_residual=harmonic_residual,
        invariant_dim=d, invariant_basis=zbasis,
        fit_residual=residual,
        nondegenerate=bool(nondegenerate),
        growth_lower_bound=float(growth_lower_bound),
    )


def invariant_subspace_of(poly: Polynomial, dim: int):
    """Largest slab subspace along which the polynomial is translation invariant."""
    cols = []
    monos = None
    for i in range(dim - 1):
        dp = poly.diff(i)
        if monos is None:
            monos = sorted(
                set().union(*[set(poly.diff(k).coefficients) for k in range(dim - 1)])
            ) or [(0,) * dim]
        cols.append(np.array([dp.coefficient(m) for m in monos]))
    M = np.stack(cols, axis=1) if cols else np.zeros((1, 0))
    if M.shape[1] == 0:
        return 0, np.zeros((0, dim))
    kernel = scipy.linalg.null_space(M, rcond=1e-10)
    d = kernel.shape[1]
    if d > dim - 2 and not poly.is_zero():
        raise InternalInconsistencyError(
            "invariant subspace of a nonzero even tangent cannot fill the slab"
        )
    basis = np.zeros((d, dim))
    basis[:, : dim - 1] = kernel.T
    return d, basis


def invariant_subspace(t: TangentPolynomial):
    """Dimension and slab directions of S(v*); wraps the rank computation."""
    return invariant_subspace_of(t.polynomial, t.dim)


# ---------------------------------------------------------------------------
# tangent map continuity


def tangent_continuity_report(points, tangents) -> dict:
    """Empirical modulus of continuity of the tangent map.

    Tabulates coefficient-norm distances against base-point distances for
    all pairs and returns the monotone envelope (largest coefficient
    distance at or below each separation).
    """
    points = [np.asarray(p, dtype=float) for p in points]
    if len(points) != len(tangents) or len(points) < 2:
        raise SpecError("need matching lists with at least 2 classified points")
    pairs = []
    for i in range(len(points)):
        for j in range(i + 1, len(points)):
            dx = float(np.linalg.norm(points[i] - points[j]))
            dc = float(
                np.linalg.norm(
                    tangents[i].coefficient_vector() - tangents[j].coefficient_vector()
                )
            )
            pairs.append((dx, dc))
    pairs.sort()
    envelope = []
    running = 0.0
    for dx, dc in pairs:
        running = max(running, dc)
        envelope.append((dx, running))
    return {"pairs": pairs, "envelope": envelope}
