"""Contact set extraction, free-boundary classification, and stratification.

The contact set collects slab nodes with |u - h| <= tau_contact; its
discrete frontier (contact nodes with a non-contact slab neighbor) is the
free boundary, refined along each crossing edge by a bracketed root solve
of |u - h| - tau_contact.

A free boundary point is regular when the tangential gradient of u - h
exceeds tau_grad there.  Otherwise the full normalized analysis is rerun
recentered at the point: the data are translated, the affine map
y -> x0 + L y with L the symmetric square root of A(x0) restores the
identity at the origin (L preserves the slab because a^{in} vanishes on
it), the obstacle is re-extended around x0, a frequency profile is
computed on a window ladder, and the tangent polynomial is fitted and
mapped back to the translated frame, where it is annihilated by the
frozen operator a^{ij}(x0) D_ij.  Points whose profile is truncation
limited (frequency at the detectable ceiling kappa) are reported with
that flag and never asserted against the tangent theorems.

Singular points are grouped into strata by (nu, d); for three-dimensional
instances the d = 1 strata carry a least-squares line-fit residual as a
rectifiability witness.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.optimize

from . import expressions as ex
from . import diagnostics as dg
from .blowup import TangentPolynomial, estimate_frequency, fit_tangent, invariant_subspace_of
from .errors import ResolutionError, SpecError
from .fields import CoefficientField, ProblemSpec, ScalarField
from .taylor import extension_calculus

__all__ = [
    "ContactSet",
    "FreeBoundaryPoint",
    "RecenteredProblem",
    "extract_contact_set",
    "extract_free_boundary",
    "classify_point",
    "stratify",
    "recenter",
]

EDGE_MARGIN = 0.05   # classification excluded this close to the slab window edge


@dataclass
class ContactSet:
    """Boolean mask over slab nodes where |u - h| <= tau_contact."""

    grid: object
    mask: np.ndarray
    tau_contact: float


@dataclass
class FreeBoundaryPoint:
    location: np.ndarray
    kind: str                                  # regular | singular | truncation_limited
    nu: int | None = None
    stratum_dim: int | None = None
    tangent: TangentPolynomial | None = None
    frequency_estimate: object = None
    monneau_series: np.ndarray | None = None

    def record(self) -> dict:
        out = {
            "location": [float(c) for c in self.location],
            "kind": self.kind,
            "nu": self.nu,
            "d": self.stratum_dim,
        }
        if self.tangent is not None:
            out["tangent"] = self.tangent.to_json()
        return out


def extract_contact_set(u: ScalarField, h, tau_contact: float | None = None) -> ContactSet:
    """Slab nodes within tau_contact of the obstacle."""
    grid = u.grid
    h_expr = h if isinstance(h, ex.Expr) else ex.parse_expression(str(h))
    slab_nodes = grid.nodes().reshape(grid.shape + (grid.dim,))[..., 0, :]
    slab_nodes = slab_nodes.reshape(-1, grid.dim)
    diff = u.slab_values().ravel() - h_expr.ev(slab_nodes)
    if tau_contact is None:
        tau_contact = 1e-6 * (1.0 + u.max_abs())
    mask = (np.abs(diff) <= tau_contact).reshape(grid.shape[:-1])
    return ContactSet(grid=grid, mask=mask, tau_contact=float(tau_contact))


def _slab_neighbors(mask: np.ndarray, idx: tuple):
    for ax in range(mask.ndim):
        for step in (-1, 1):
            j = list(idx)
            j[ax] += step
            if 0 <= j[ax] < mask.shape[ax]:
                yield tuple(j), ax, step


def extract_free_boundary(contact: ContactSet, u: ScalarField | None = None,
                          h=None) -> list:
    """Discrete frontier of the contact set, refined along crossing edges.

    Contact nodes with at least one non-contact slab neighbor are frontier
    nodes; when u (and h) are given, each crossing edge is refined by a
    bracketed root of |u - h| - tau_contact.  Returns slab points
    (full-dimension coordinates with x_n = 0).
    """
    grid = contact.grid
    mask = contact.mask
    n = grid.dim
    axes = grid.axes
    h_expr = None
    if h is not None:
        h_expr = h if isinstance(h, ex.Expr) else ex.parse_expression(str(h))

    def s(point):
        val = u.evaluate(point)
        hv = h_expr(point) if h_expr is not None else 0.0
        return abs(val - hv) - contact.tau_contact

    points = []
    for idx in np.argwhere(mask):
        idx = tuple(idx)
        for jdx, ax, step in _slab_neighbors(mask, idx):
            if mask[jdx]:
                continue
            a = np.array([axes[k][idx[k]] for k in range(n - 1)] + [0.0])
            b = a.copy()
            b[ax] = axes[ax][jdx[ax]]
            if u is None:
                points.append(a)
                continue
            sa, sb = s(a), s(b)
            if sa == 0.0:
                points.append(a)
                continue
            if sa * sb > 0:
                points.append(a)
                continue

            def along(t, a=a, b=b):
                return s(a + t * (b - a))

            t_star = scipy.optimize.brentq(along, 0.0, 1.0, xtol=1e-12)
            points.append(a + t_star * (b - a))
    return points


# ---------------------------------------------------------------------------
# recentering


class RecenteredField:
    """Field-like view v_loc(y) = u(x0 + L y) - h_tilde_loc(L y)."""

    def __init__(self, u, h_tilde, h_tilde_gradient, x0, L, h_grid):
        self.u = u
        self.h_tilde = h_tilde
        self.h_tilde_gradient = h_tilde_gradient
        self.x0 = np.asarray(x0, dtype=float)
        self.L = np.asarray(L, dtype=float)
        self.h_grid = float(h_grid)

    def evaluate(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        xi = pts @ self.L.T
        return self.u.evaluate(self.x0 + xi) - self.h_tilde(xi)

    def gradient(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        xi = pts @ self.L.T
        gx = self.u.gradient(self.x0 + xi) - self.h_tilde_gradient(xi)
        return gx @ self.L    # L symmetric: (L^T grad)_k


@dataclass
class RecenteredProblem:
    """Everything needed to run diagnostics around a slab point x0."""

    x0: np.ndarray
    L: np.ndarray
    field: RecenteredField
    A: CoefficientField
    k_plus: ex.Expr
    k_minus: ex.Expr
    f_eval: object
    kappa: int
    ladder: dg.RadiusLadder
    p: float


def recenter(spec: ProblemSpec, u: ScalarField, x0,
             rho_max: float = 0.45, per_octave: int = 4) -> RecenteredProblem:
    """Translate the problem to x0 and normalize the frozen matrix to I.

    Requires a^{in} = 0 on the whole slab (already a spec hypothesis) so
    the square root L of A(x0) is block diagonal and preserves the slab.
    """
    x0 = np.asarray(x0, dtype=float)
    n = spec.grid.dim
    if abs(x0[-1]) > 1e-14:
        raise SpecError("classification points live on the slab")

    A0 = spec.A.matrices(x0[None, :])[0]
    if np.abs(A0[: n - 1, n - 1]).max() > 1e-10:
        raise SpecError("a^{in}(x0) must vanish for slab-preserving recentering")
    evals, evecs = np.linalg.eigh(A0)
    L = (evecs * np.sqrt(evals)) @ evecs.T
    Linv = (evecs / np.sqrt(evals)) @ evecs.T
    sig_max = float(np.sqrt(evals.max()))
    sig_min = float(np.sqrt(evals.min()))

    # translated data around x0 (xi coordinates), then L-composed (y coordinates)
    shift = np.eye(n), x0
    a_shift = [[ex.affine_substitute(spec.A.entries[i][j], *shift) for j in range(n)]
               for i in range(n)]
    A_loc = CoefficientField(a_shift, ellipticity=spec.A.ellipticity,
                             lipschitz_bound=spec.A.lipschitz_bound)
    h_loc = ex.affine_substitute(spec.h, np.eye(n - 1), x0[: n - 1])
    calc = extension_calculus(A_loc, h_loc, spec.kappa)

    a_y = [[None] * n for _ in range(n)]
    comp = L, np.zeros(n)
    for k in range(n):
        for l in range(n):
            acc = ex.const(0.0)
            for i in range(n):
                for j in range(n):
                    w = Linv[k, i] * Linv[j, l]
                    if w != 0.0:
                        acc = ex.add(acc, ex.mul(ex.const(w),
                                                 ex.affine_substitute(a_shift[i][j], *comp)))
            a_y[k][l] = acc
    lam, Lam = spec.A.ellipticity
    A_y = CoefficientField(
        a_y,
        ellipticity=(lam / max(evals.max(), 1.0), Lam / min(evals.min(), 1.0)),
        lipschitz_bound=spec.A.lipschitz_bound * sig_max / min(evals.min(), 1.0),
    )

    ell = L[n - 1, n - 1]
    slab_comp = L[: n - 1, : n - 1], x0[: n - 1]
    k_plus_y = ex.mul(ex.const(1.0 / ell), ex.affine_substitute(spec.k_plus, *slab_comp))
    k_minus_y = ex.mul(ex.const(1.0 / ell), ex.affine_substitute(spec.k_minus, *slab_comp))

    def f_y(points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return calc.f_eval(pts @ L.T)

    h_grid = spec.grid.spacing
    rho_top = min(rho_max, (0.98 - float(np.abs(x0).max())) / sig_max)
    floor = dg.FLOOR_FACTOR * h_grid / sig_min
    if floor > rho_top:
        raise ResolutionError(
            f"recentered window at {x0} leaves no resolvable rungs"
        )
    # densify short windows so the frequency extrapolation has >= 6 rungs
    octaves = np.log2(rho_top / floor)
    if octaves > 0:
        per_octave = max(per_octave, min(32, int(np.ceil(5.0 / octaves))))
    rungs = []
    k = 0
    while True:
        rho = rho_top * 2.0 ** (-k / per_octave)
        if rho < floor - 1e-12:
            break
        rungs.append(rho)
        k += 1
    if len(rungs) < 6:
        raise ResolutionError(
            f"recentered window at {x0} resolves only {len(rungs)} rungs"
        )
    ladder = dg.RadiusLadder(np.array(rungs))

    field = RecenteredField(u, calc.h_tilde, calc.h_tilde_gradient, x0, L,
                            h_grid / sig_min)
    return RecenteredProblem(
        x0=x0, L=L, field=field, A=A_y, k_plus=k_plus_y, k_minus=k_minus_y,
        f_eval=f_y, kappa=spec.kappa, ladder=ladder, p=spec.p,
    )


# ---------------------------------------------------------------------------
# classification


def classify_point(x0, u: ScalarField, spec: ProblemSpec,
                   tau_grad: float | None = None) -> FreeBoundaryPoint:
    """Classify one free-boundary point as regular, singular, or truncation limited.

    Regular means the tangential gradient of u - h exceeds tau_grad
    (default 10 h).  Otherwise the recentered frequency profile decides:
    an estimated integer frequency >= 2 attaches a fitted tangent and its
    invariant-subspace dimension; frequency 1 reclassifies the point as
    regular (a gradient appears in the blow-up even if the nodal test was
    borderline); a ceiling-limited profile is flagged truncation_limited.
    """
    x0 = np.asarray(x0, dtype=float)
    grid = spec.grid
    n = grid.dim
    if np.abs(x0[: n - 1]).max() > 1.0 - EDGE_MARGIN:
        raise ResolutionError(
            f"point {x0} is within {EDGE_MARGIN} of the slab window edge"
        )
    if tau_grad is None:
        tau_grad = 10.0 * grid.spacing

    grad_u = u.gradient(x0)
    hgrad = np.array([spec.h.d(ax)(x0) for ax in range(n - 1)])
    tangential = grad_u[: n - 1] - hgrad
    if float(np.linalg.norm(tangential)) > tau_grad:
        return FreeBoundaryPoint(location=x0, kind="regular")

    local = recenter(spec, u, x0)
    profile = dg.frequency_profile(
        local.field, local.A, kappa=local.kappa, ladder=local.ladder,
        k_plus=local.k_plus, k_minus=local.k_minus, p=local.p,
        f_eval=local.f_eval,
    )
    est = estimate_frequency(profile)
    if est.truncation_limited:
        return FreeBoundaryPoint(location=x0, kind="truncation_limited",
                                 nu=int(local.kappa), frequency_estimate=est)
    if est.nu_int < 2:
        return FreeBoundaryPoint(location=x0, kind="regular", frequency_estimate=est)

    tangent_y = fit_tangent(local.field, np.zeros(n), est.nu_int, local.ladder)
    Linv = np.linalg.inv(local.L)
    poly_x = tangent_y.polynomial.compose_linear(Linv)
    d, basis = invariant_subspace_of(poly_x, n)
    tangent = TangentPolynomial(
        nu=tangent_y.nu, dim=n, polynomial=poly_x,
        harmonic_residual=tangent_y.harmonic_residual,
        invariant_dim=d, invariant_basis=basis,
        fit_residual=tangent_y.fit_residual,
        nondegenerate=tangent_y.nondegenerate,
        growth_lower_bound=tangent_y.growth_lower_bound,
    )
    small = np.sort(local.ladder.rho_values)[:3]
    monneau = np.array([
        dg.compute_monneau(local.field, local.A, r, tangent_y, tangent_y.nu)
        for r in small
    ])
    return FreeBoundaryPoint(
        location=x0, kind="singular", nu=int(est.nu_int), stratum_dim=int(d),
        tangent=tangent, frequency_estimate=est, monneau_series=monneau,
    )


def stratify(points: list) -> dict:
    """Group singular points by (nu, d); line-fit residuals witness d = 1 strata."""
    strata: dict = {}
    for pt in points:
        if pt.kind != "singular":
            continue
        key = (int(pt.nu), int(pt.stratum_dim))
        strata.setdefault(key, []).append(pt)
    line_fits = {}
    for key, pts in strata.items():
        if key[1] == 1 and len(pts) >= 2:
            locs = np.stack([p.location for p in pts])[:, :-1]
            center = locs.mean(axis=0)
            centered = locs - center
            _, _, vt = np.linalg.svd(centered, full_matrices=False)
            direction = vt[0]
            residual = float(
                np.abs(centered - np.outer(centered @ direction, direction)).max()
            )
            line_fits[key] = {
                "direction": direction.tolist(),
                "max_residual": residual,
                "count": len(pts),
            }
    return {
        "strata": strata,
        "counts": {f"{k[0]},{k[1]}": len(v) for k, v in sorted(strata.items())},
        "line_fits": line_fits,
    }
