"""Discrete energy assembly and minimization.

The energy

    J(w) = 1/2 int a^{ij} D_i w D_j w
         + 1/p int_slab (k+ ((w-h)^+)^p + k- ((w-h)^-)^p)

is discretized with multilinear (Q1) elements on the half-cube cells,
coefficients frozen at cell midpoints and element integrals done with a
2-point Gauss rule per axis (exact for interpolant gradients), plus a
tensor trapezoid rule for the slab penalty.  The result is a sparse SPD
quadratic form plus a separable convex penalty over slab nodes, so the
whole problem is strongly convex once Dirichlet values pin the outer faces
(lateral and top), and the minimizer is unique.

Minimization is a damped Newton iteration: for p > 2 the penalty is C^1
with a monotone derivative, for p = 2 it is piecewise linear and the
active-set (semismooth) Jacobian is used, with slope k+ above the
obstacle, k- below, and the tie-break slope (k+ + k-)/2 on the contact
set.  Linear solves use a sparse direct factorization; sizes here are desk
scale.  Every accepted step is required not to increase the energy.

Convergence requires both the node-count-scaled Euclidean gradient norm to
fall below tol and the tent-function residual (see weak_residual) to fall
below 10 tol, so the discrete weak-solution identity holds for every
converged solve by construction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import expressions as ex
from .errors import NonConvergedError, SpecError
from .fields import CoefficientField, ProblemSpec, ScalarField, validate_spec
from .geometry import Grid

__all__ = [
    "DiscreteEnergy",
    "SolveResult",
    "assemble",
    "minimize",
    "weak_residual",
    "solve_linear_mixed",
    "boundary_flux_report",
]


def _cell_corner_indices(grid: Grid):
    """Flat node indices of every cell's 2^n corners, shape (C, 2^n).

    Corner k has bit ax set when shifted by +1 along axis ax, matching the
    interpolation corner order.
    """
    shape = grid.shape
    n = grid.dim
    strides = np.array(
        [int(np.prod(shape[ax + 1:])) for ax in range(n)], dtype=np.int64
    )
    base_ranges = [np.arange(s - 1) for s in shape]
    mesh = np.meshgrid(*base_ranges, indexing="ij")
    base = np.zeros(mesh[0].size, dtype=np.int64)
    for ax in range(n):
        base += mesh[ax].ravel() * strides[ax]
    corners = np.empty((base.size, 2 ** n), dtype=np.int64)
    for corner in range(2 ** n):
        offset = 0
        for ax in range(n):
            if (corner >> ax) & 1:
                offset += strides[ax]
        corners[:, corner] = base + offset
    return corners


def _element_gradients(grid: Grid):
    """Gauss-point gradient matrices B_g (n x 2^n) and weights on one cell."""
    n = grid.dim
    h = grid.spacing
    gp1 = 0.5 - 0.5 / np.sqrt(3.0)
    gp2 = 0.5 + 0.5 / np.sqrt(3.0)
    pts1d = np.array([gp1, gp2])
    mats = []
    for gidx in itertools.product(range(2), repeat=n):
        xi = np.array([pts1d[g] for g in gidx])   # reference coords in [0,1]
        B = np.empty((n, 2 ** n))
        for corner in range(2 ** n):
            for ax in range(n):
                prod = 1.0
                for ax2 in range(n):
                    bit = (corner >> ax2) & 1
                    if ax2 == ax:
                        prod *= (1.0 if bit else -1.0) / h
                    else:
                        prod *= xi[ax2] if bit else 1.0 - xi[ax2]
                B[ax, corner] = prod
        mats.append(B)
    weight = (h / 2.0) ** n
    return np.stack(mats), weight


def _slab_trapezoid_weights(grid: Grid):
    """Tensor trapezoid weights over the slab plane, shape grid.shape[:-1]."""
    h = grid.spacing
    m = grid.cells_per_axis
    w1 = np.full(m, h)
    w1[0] = w1[-1] = h / 2.0
    if grid.dim == 2:
        return w1
    return np.outer(w1, w1)


def _stiffness(grid: Grid, A: CoefficientField):
    """Global stiffness from Q1 elements with midpoint-frozen coefficients."""
    corners = _cell_corner_indices(grid)
    B, wq = _element_gradients(grid)
    nodes = grid.nodes()
    centers = nodes[corners[:, 0]] + grid.spacing / 2.0
    a_c = A.matrices(centers)                       # (C, n, n)
    # local stiffness: sum_g wq B_g^T a_c B_g  -> (C, 2^n, 2^n)
    loc = np.zeros((corners.shape[0], corners.shape[1], corners.shape[1]))
    for g in range(B.shape[0]):
        aB = np.einsum("cnm,mk->cnk", a_c, B[g])
        loc += wq * np.einsum("ni,cnk->cik", B[g], aB)
    rows = np.repeat(corners, corners.shape[1], axis=1).ravel()
    cols = np.tile(corners, (1, corners.shape[1])).ravel()
    K = sp.coo_matrix(
        (loc.ravel(), (rows, cols)), shape=(grid.num_nodes, grid.num_nodes)
    ).tocsr()
    K.sum_duplicates()
    return K


def _mass_diag(grid: Grid):
    """Lumped diagonal of the Q1 mass matrix (exact per-cell self-integrals)."""
    corners = _cell_corner_indices(grid)
    cell_val = (grid.spacing / 3.0) ** grid.dim
    diag = np.zeros(grid.num_nodes)
    np.add.at(diag, corners.ravel(), cell_val)
    return diag


@dataclass
class DiscreteEnergy:
    """Assembled discrete energy: quadratic form plus separable slab penalty."""

    spec: ProblemSpec
    K: sp.csr_matrix
    slab_flat: np.ndarray        # flat node indices of the slab plane
    omega: np.ndarray            # trapezoid weights per slab node
    kp: np.ndarray
    km: np.ndarray
    h_slab: np.ndarray
    dirichlet_flat: np.ndarray   # flat indices of outer Dirichlet nodes
    free_flat: np.ndarray
    g_dirichlet: np.ndarray      # Dirichlet values on dirichlet_flat
    tent_norm: np.ndarray        # W^{1,2} norm of the tent function per node

    def penalty_terms(self, t: np.ndarray):
        p = self.spec.p
        pos = np.maximum(t - self.h_slab, 0.0)
        neg = np.maximum(self.h_slab - t, 0.0)
        value = np.dot(self.omega, (self.kp * pos ** p + self.km * neg ** p) / p)
        grad = self.omega * (self.kp * pos ** (p - 1) - self.km * neg ** (p - 1))
        if p == 2.0:
            hess = self.kp * (pos > 0.0) + self.km * (neg > 0.0)
            tie = (pos == 0.0) & (neg == 0.0)
            hess = hess + 0.5 * (self.kp + self.km) * tie
            hess = self.omega * hess
        else:
            hess = self.omega * (p - 1.0) * (
                self.kp * pos ** (p - 2.0) + self.km * neg ** (p - 2.0)
            )
        return float(value), grad, hess

    def energy(self, values) -> float:
        v = np.asarray(values, dtype=float).ravel()
        quad = 0.5 * float(v @ (self.K @ v))
        value, _, _ = self.penalty_terms(v[self.slab_flat])
        return quad + value

    def gradient_full(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float).ravel()
        g = self.K @ v
        _, pgrad, _ = self.penalty_terms(v[self.slab_flat])
        g[self.slab_flat] += pgrad
        return g

    def residual_norms(self, values):
        """(node-scaled Euclidean norm, tent-normalized max) over free nodes."""
        g = self.gradient_full(values)[self.free_flat]
        gnorm = float(np.linalg.norm(g)) / max(len(self.free_flat), 1)
        wres = float(np.abs(g / self.tent_norm[self.free_flat]).max()) if len(g) else 0.0
        return gnorm, wres


def assemble(spec: ProblemSpec, check: bool = True) -> DiscreteEnergy:
    """Assemble the discrete energy; validates the spec hypotheses first."""
    if check:
        report = validate_spec(spec)
        if not report.passed:
            raise SpecError(
                "spec fails hypothesis checks: " + ", ".join(report.failed_names())
            )
    grid = spec.grid
    K = _stiffness(grid, spec.A)

    shape = grid.shape
    slab_idx = np.zeros(shape, dtype=bool)
    slab_idx[grid.slab_multi_index()] = True
    slab_flat = np.flatnonzero(slab_idx.ravel())
    nodes = grid.nodes()
    slab_pts = nodes[slab_flat]
    omega = _slab_trapezoid_weights(grid).ravel()
    kp = np.maximum(spec.k_plus.ev(slab_pts), 0.0)
    km = np.maximum(spec.k_minus.ev(slab_pts), 0.0)
    h_slab = spec.h.ev(slab_pts)

    dir_mask = grid.outer_dirichlet_mask().ravel()
    dirichlet_flat = np.flatnonzero(dir_mask)
    free_flat = np.flatnonzero(~dir_mask)
    g_dirichlet = spec.dirichlet_g.ev(nodes[dirichlet_flat])

    K_I = _stiffness(grid, CoefficientField.identity(grid.dim))
    tent = np.sqrt(K_I.diagonal() + _mass_diag(grid))

    return DiscreteEnergy(
        spec=spec, K=K, slab_flat=slab_flat, omega=omega, kp=kp, km=km,
        h_slab=h_slab, dirichlet_flat=dirichlet_flat, free_flat=free_flat,
        g_dirichlet=g_dirichlet, tent_norm=tent,
    )


@dataclass
class SolveResult:
    u: ScalarField
    iterations: int
    energy_history: list = dc_field(default_factory=list)
    gradient_norm: float = np.inf
    weak_residual: float = np.inf
    converged: bool = False

    def metadata(self) -> dict:
        return {
            "iterations": self.iterations,
            "energy_history": [float(e) for e in self.energy_history],
            "gradient_norm": float(self.gradient_norm),
            "weak_residual": float(self.weak_residual),
            "converged": bool(self.converged),
        }


def minimize(
    energy: DiscreteEnergy,
    initial: ScalarField,
    tol: float = 1e-10,
    max_iter: int = 100,
) -> SolveResult:
    """Damped (semismooth for p=2) Newton minimization of the assembled energy.

    The initial iterate must carry the Dirichlet data on the outer faces;
    it is pinned there in any case.  Raises :class:`NonConvergedError`
    after max_iter steps, carrying the last iterate and history.
    """
    grid = energy.spec.grid
    x = np.asarray(initial.values, dtype=float).ravel().copy()
    x[energy.dirichlet_flat] = energy.g_dirichlet

    free = energy.free_flat
    Kff = energy.K[free][:, free].tocsc()
    slab_in_free = np.searchsorted(free, energy.slab_flat)
    slab_is_free = np.isin(energy.slab_flat, free)
    slab_free_rows = slab_in_free[slab_is_free]

    history = [energy.energy(x)]
    gnorm, wres = energy.residual_norms(x)
    iterations = 0

    while not (gnorm <= tol and wres <= 10.0 * tol):
        if iterations >= max_iter:
            raise NonConvergedError(
                f"no convergence after {max_iter} Newton steps "
                f"(gradient_norm={gnorm:.3e}, weak_residual={wres:.3e})",
                last_iterate=ScalarField(grid, x.reshape(grid.shape)),
                energy_history=history,
            )
        g_full = energy.gradient_full(x)
        g = g_full[free]
        _, _, phess = energy.penalty_terms(x[energy.slab_flat])
        H = Kff + sp.diags(
            np.bincount(slab_free_rows, weights=phess[slab_is_free], minlength=len(free)),
            format="csc",
        )
        step = spla.splu(H).solve(-g)

        t = 1.0
        e0 = history[-1]
        slope = float(g @ step)
        accepted = False
        for _ in range(60):
            x_try = x.copy()
            x_try[free] += t * step
            e_try = energy.energy(x_try)
            if e_try <= e0 + 1e-4 * t * slope or e_try <= e0:
                x = x_try
                history.append(min(e_try, e0))
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # descent stalled at rounding level; accept convergence check below
            history.append(e0)
        iterations += 1
        gnorm, wres = energy.residual_norms(x)
        if not accepted and iterations > 2:
            if gnorm <= 10.0 * tol and wres <= 100.0 * tol:
                break
            raise NonConvergedError(
                f"line search stalled (gradient_norm={gnorm:.3e})",
                last_iterate=ScalarField(grid, x.reshape(grid.shape)),
                energy_history=history,
            )

    return SolveResult(
        u=ScalarField(grid, x.reshape(grid.shape)),
        iterations=iterations,
        energy_history=history,
        gradient_norm=gnorm,
        weak_residual=wres,
        converged=True,
    )


def weak_residual(u: ScalarField, spec: ProblemSpec) -> float:
    """Max over tent test functions of the weak identity, tent-normalized.

    For every interior and slab node (tents vanish near the outer faces)
    the identity int a^{ij} D_j u D_i zeta + int_slab (k+ ((u-h)^+)^{p-1}
    - k- ((u-h)^-)^{p-1}) zeta is evaluated with the same cell rules as the
    energy and divided by the W^{1,2} norm of the tent.
    """
    energy = assemble(spec, check=False)
    _, wres = energy.residual_norms(u.values)
    return wres


def solve_linear_mixed(
    flux,
    dirichlet,
    A: CoefficientField,
    grid: Grid,
) -> ScalarField:
    """One linear solve of D_i(a^{ij} D_j w) = 0 with a slab co-normal datum.

    The slab condition is a^{nn} D_n w = flux (flux is the prescribed
    derivative in the +e_n direction, i.e. minus the outward co-normal
    flux), enforced weakly through the slab load; w = dirichlet on the
    outer faces.
    """
    flux_fn = flux.ev if isinstance(flux, ex.Expr) else flux
    dir_fn = dirichlet.ev if isinstance(dirichlet, ex.Expr) else dirichlet

    K = _stiffness(grid, A)
    shape = grid.shape
    slab_idx = np.zeros(shape, dtype=bool)
    slab_idx[grid.slab_multi_index()] = True
    slab_flat = np.flatnonzero(slab_idx.ravel())
    nodes = grid.nodes()
    omega = _slab_trapezoid_weights(grid).ravel()

    dir_mask = grid.outer_dirichlet_mask().ravel()
    free = np.flatnonzero(~dir_mask)
    fixed = np.flatnonzero(dir_mask)

    x = np.zeros(grid.num_nodes)
    x[fixed] = np.asarray(dir_fn(nodes[fixed]), dtype=float)

    load = np.zeros(grid.num_nodes)
    load[slab_flat] = omega * np.asarray(flux_fn(nodes[slab_flat]), dtype=float)

    rhs = -(K @ x)[free] - load[free]
    Kff = K[free][:, free].tocsc()
    x[free] = spla.splu(Kff).solve(rhs)
    return ScalarField(grid, x.reshape(grid.shape))


def boundary_flux_report(u: ScalarField, spec: ProblemSpec) -> dict:
    """One-sided discrete slab flux versus the penalty expression.

    Returns the 2nd-order one-sided a^{nn} D_n u on interior slab nodes,
    the penalty k+ ((u-h)^+)^{p-1} - k- ((u-h)^-)^{p-1}, and the worst
    signed mismatch; agreement is O(h^2), not solver-tol, because the
    exact discrete optimality condition is the element flux identity.
    """
    grid = spec.grid
    h = grid.spacing
    vals = u.values
    n = grid.dim
    sl = [slice(1, -1)] * (n - 1)
    u0 = vals[tuple(sl + [0])]
    u1 = vals[tuple(sl + [1])]
    u2 = vals[tuple(sl + [2])]
    dn = (-3.0 * u0 + 4.0 * u1 - u2) / (2.0 * h)

    nodes = grid.nodes().reshape(grid.shape + (n,))
    slab_pts = nodes[tuple(sl + [0])].reshape(-1, n)
    ann = spec.A.matrices(slab_pts)[:, n - 1, n - 1]
    flux = ann * dn.ravel()

    p = spec.p
    diff = u0.ravel() - spec.h.ev(slab_pts)
    kp = spec.k_plus.ev(slab_pts)
    km = spec.k_minus.ev(slab_pts)
    penalty = kp * np.maximum(diff, 0.0) ** (p - 1) - km * np.maximum(-diff, 0.0) ** (p - 1)
    return {
        "flux": flux,
        "penalty": penalty,
        "max_abs_mismatch": float(np.abs(flux - penalty).max()) if flux.size else 0.0,
    }
