"""Frequency-function and monotonicity diagnostics on a radius ladder.

For a normalized field v around the origin the per-rung quantities are

    H(rho) = rho^(1-n) int_{(dB_rho)^+} mu v^2
    I(rho) = rho^(2-n) int_{(dB_rho)^+} a^{ij} v D_i v x_j / rho
    D(rho) = rho^(2-n) int_{B_rho^+} a^{ij} D_i v D_j v
           + (2/p) rho^(2-n) int_{B'_rho} (k+ (v^+)^p + k- (v^-)^p)
    G(rho) = rho^(1-n)/H(rho) int_{(dB_rho)^+} v^2 ((1-n)(mu-1)/rho
                                                   + D_i(b^{ij} x_j/|x|))
    K(rho) = H(rho) exp(-int_0^rho G)
    Phi(rho) = I/H where K(rho) > rho^(2 kappa), else kappa

with mu = a^{ij} x_i x_j/|x|^2 and b = A - I.  G vanishes by convention
when H does.  The tail of int_0^rho G below the ladder floor is not
observable on the grid; it is bounded by G_bound * floor and carried as an
explicit uncertainty band on K rather than dropped.

The surface-volume identity

    D(rho) = I(rho) - rho^(2-n) int_{B_rho^+} v f
           - (p-2)/p rho^(2-n) int_{B'_rho} (k+ (v^+)^p + k- (v^-)^p)

is evaluated per rung together with a declared quadrature budget
eps_quad = 10 * (angular refinement estimate + (h/rho)^2 * magnitude),
the second term modelling interpolation/FD consistency of grid fields.

The Weiss functional W_nu = rho^(-2 nu) (I - nu H) and the Monneau
functional M = rho^(1-n-2 nu) int (v - p_nu)^2 mu are almost monotone with
an O(rho) slack; the slack constant defaults to 0 in the constant
coefficient, zero-forcing, constant-penalty model case (where the theory
gives true monotonicity) and to an engineering proxy
10 (lipschitz + f growth + penalty Lipschitz) otherwise, user-overridable.
The Weiss hypothesis is implemented as stated (nu <= kappa); its proof
uses nu <= kappa + 1, a discrepancy noted and left alone.

Fields are anything with evaluate(points) and gradient(points): grid
fields interpolate, closed-form exemplars evaluate exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import geometry
from .errors import InternalInconsistencyError, ResolutionError
from .fields import CoefficientField

__all__ = [
    "RadiusLadder",
    "FrequencyProfile",
    "MonotonicityReport",
    "GrowthReport",
    "compute_H",
    "compute_I",
    "compute_D",
    "compute_G",
    "compute_K",
    "compute_Phi",
    "compute_weiss",
    "compute_monneau",
    "check_almost_monotone",
    "growth_rate_check",
    "frequency_profile",
    "default_slack_constant",
]

RHO_MAX = geometry.RHO_MAX
FLOOR_FACTOR = 4.0


@dataclass(frozen=True)
class RadiusLadder:
    """Strictly decreasing radii in (0, 0.9], floored at 4 h_grid."""

    rho_values: np.ndarray

    def __post_init__(self):
        rv = np.asarray(self.rho_values, dtype=float)
        object.__setattr__(self, "rho_values", rv)
        if rv.ndim != 1 or len(rv) == 0:
            raise ResolutionError("ladder must hold at least one radius")
        if not np.all(np.diff(rv) < 0):
            raise ResolutionError("ladder radii must be strictly decreasing")
        if rv[0] > RHO_MAX + 1e-12:
            raise ResolutionError(f"ladder top {rv[0]} exceeds rho_max {RHO_MAX}")

    @classmethod
    def default(cls, h_grid: float, rho_max: float = RHO_MAX,
                per_octave: int = 4) -> "RadiusLadder":
        """Geometric ladder rho_k = rho_max 2^(-k/per_octave) down to 4 h_grid."""
        floor = FLOOR_FACTOR * h_grid
        if floor > rho_max:
            raise ResolutionError(
                f"resolution floor {floor} exceeds rho_max {rho_max}; grid too coarse"
            )
        rungs = []
        k = 0
        while True:
            rho = rho_max * 2.0 ** (-k / per_octave)
            if rho < floor - 1e-12:
                break
            rungs.append(rho)
            k += 1
        return cls(np.array(rungs))

    def __len__(self):
        return len(self.rho_values)


def _angular_count(rho: float, h_grid: float | None) -> int:
    if h_grid is None:
        return 128
    return max(64, int(np.ceil(4.0 * rho / h_grid)))


def _check_rho(rho: float, h_grid: float | None):
    if rho > RHO_MAX + 1e-12:
        raise ResolutionError(f"radius {rho} exceeds the diagnostics window {RHO_MAX}")
    if h_grid is not None and rho < FLOOR_FACTOR * h_grid - 1e-12:
        raise ResolutionError(
            f"radius {rho} is below the resolution floor {FLOOR_FACTOR * h_grid}"
        )


def _grid_h(v) -> float | None:
    hint = getattr(v, "h_grid", None)
    if hint is not None:
        return float(hint)
    grid = getattr(v, "grid", None)
    return None if grid is None else grid.spacing


def _dim(v, A: CoefficientField) -> int:
    grid = getattr(v, "grid", None)
    return A.dim if grid is None else grid.dim


def compute_H(v, A: CoefficientField, rho: float, angular_count: int | None = None) -> float:
    """rho^(1-n) boundary integral of mu v^2 over the hemisphere."""
    h_grid = _grid_h(v)
    _check_rho(rho, h_grid)
    n = _dim(v, A)
    q = geometry.hemisphere_quadrature(n, rho, angular_count or _angular_count(rho, h_grid))
    vals = v.evaluate(q.nodes)
    return rho ** (1 - n) * q.integrate(A.mu(q.nodes) * vals ** 2)


def compute_I(v, A: CoefficientField, rho: float, angular_count: int | None = None) -> float:
    """rho^(2-n) boundary integral of a^{ij} v D_i v x_j / rho."""
    h_grid = _grid_h(v)
    _check_rho(rho, h_grid)
    n = _dim(v, A)
    q = geometry.hemisphere_quadrature(n, rho, angular_count or _angular_count(rho, h_grid))
    vals = v.evaluate(q.nodes)
    grads = v.gradient(q.nodes)
    Amat = A.matrices(q.nodes)
    radial = np.einsum("pij,pj,pi->p", Amat, grads, q.nodes) / rho
    return rho ** (2 - n) * q.integrate(vals * radial)


def compute_D(
    v,
    A: CoefficientField,
    rho: float,
    k_plus=None,
    k_minus=None,
    p: float = 2.0,
    angular_count: int | None = None,
    radial_count: int | None = None,
) -> float:
    """Volume Dirichlet term plus the (2/p)-weighted slab penalty term."""
    h_grid = _grid_h(v)
    _check_rho(rho, h_grid)
    n = _dim(v, A)
    ang = angular_count or _angular_count(rho, h_grid)
    hb = geometry.halfball_quadrature(
        n, rho, spacing=h_grid, angular_count=ang, radial_count=radial_count
    )
    grads = v.gradient(hb.nodes)
    Amat = A.matrices(hb.nodes)
    quad = np.einsum("pij,pi,pj->p", Amat, grads, grads)
    out = hb.integrate(quad)
    if k_plus is not None or k_minus is not None:
        dk = geometry.disk_quadrature(n, rho, spacing=h_grid)
        vals = v.evaluate(dk.nodes)
        kp = k_plus.ev(dk.nodes) if k_plus is not None else 0.0
        km = k_minus.ev(dk.nodes) if k_minus is not None else 0.0
        pen = kp * np.maximum(vals, 0.0) ** p + km * np.maximum(-vals, 0.0) ** p
        out += (2.0 / p) * dk.integrate(pen)
    return rho ** (2 - n) * out


def compute_G(
    v,
    A: CoefficientField,
    rho: float,
    H: float | None = None,
    angular_count: int | None = None,
) -> float:
    """Logarithmic correction integrand; 0 by convention when H = 0."""
    h_grid = _grid_h(v)
    _check_rho(rho, h_grid)
    n = _dim(v, A)
    q = geometry.hemisphere_quadrature(n, rho, angular_count or _angular_count(rho, h_grid))
    vals = v.evaluate(q.nodes)
    mu = A.mu(q.nodes)
    if H is None:
        H = rho ** (1 - n) * q.integrate(mu * vals ** 2)
    if H <= 0.0:
        return 0.0
    integrand = vals ** 2 * (
        (1 - n) * (mu - 1.0) / rho + A.div_b_radial(q.nodes)
    )
    return rho ** (1 - n) * q.integrate(integrand) / H


def compute_K(rhos, G_values, H_values, rho: float, G_bound: float = 0.0):
    """K(rho) = H(rho) exp(-int_0^rho G) with an uncertainty band.

    The integral is a trapezoid over the ladder rungs from the floor up to
    rho; the unobservable (0, floor) tail contributes at most
    G_bound * floor to the exponent and widens the band.
    """
    rhos = np.asarray(rhos, dtype=float)
    G_values = np.asarray(G_values, dtype=float)
    H_values = np.asarray(H_values, dtype=float)
    order = np.argsort(rhos)
    r_asc, g_asc = rhos[order], G_values[order]
    idx = int(np.argmin(np.abs(rhos - rho)))
    H = H_values[idx]
    pos = int(np.argmin(np.abs(r_asc - rho)))
    integral = float(np.trapezoid(g_asc[: pos + 1], r_asc[: pos + 1])) if pos > 0 else 0.0
    tail = abs(G_bound) * r_asc[0]
    K = H * np.exp(-integral)
    return K, (K * np.exp(-tail), K * np.exp(tail))


def compute_Phi(H: float, I: float, K: float, rho: float, kappa: int) -> float:
    """I/H on the untruncated branch {K > rho^(2 kappa)}, else kappa."""
    if K > rho ** (2 * kappa):
        if H <= 0.0:
            raise InternalInconsistencyError(
                "K above the truncation threshold with H = 0 cannot occur"
            )
        return I / H
    return float(kappa)


def compute_weiss(v, A: CoefficientField, rho: float, nu: float,
                  angular_count: int | None = None) -> float:
    """rho^(-2 nu) (I(rho) - nu H(rho))."""
    H = compute_H(v, A, rho, angular_count)
    I = compute_I(v, A, rho, angular_count)
    return rho ** (-2.0 * nu) * (I - nu * H)


def compute_monneau(v, A: CoefficientField, rho: float, tangent, nu: int | None = None,
                    angular_count: int | None = None) -> float:
    """rho^(1-n-2 nu) boundary integral of (v - p_nu)^2 mu."""
    h_grid = _grid_h(v)
    _check_rho(rho, h_grid)
    n = _dim(v, A)
    if nu is None:
        nu = int(getattr(tangent, "nu", None) or getattr(tangent, "degree"))
    q = geometry.hemisphere_quadrature(n, rho, angular_count or _angular_count(rho, h_grid))
    vals = v.evaluate(q.nodes)
    if hasattr(tangent, "polynomial"):
        pvals = tangent.polynomial.evaluate(q.nodes)
    elif hasattr(tangent, "evaluate"):
        pvals = tangent.evaluate(q.nodes)
    else:
        pvals = np.asarray(tangent(q.nodes), dtype=float)
    mu = A.mu(q.nodes)
    return rho ** (1 - n - 2 * nu) * q.integrate((vals - pvals) ** 2 * mu)


# ---------------------------------------------------------------------------
# reports


@dataclass
class MonotonicityReport:
    passed: bool
    worst_violation: float
    worst_pair: tuple
    slack: float
    tol: float

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        return (
            f"[{status}] almost-monotone (slack={self.slack:g}, tol={self.tol:g}): "
            f"worst violation {self.worst_violation:.3e} at rho pair {self.worst_pair}"
        )


def check_almost_monotone(rhos, series, slack: float, tol: float = 0.0) -> MonotonicityReport:
    """Verify s(sigma) <= s(rho) + slack (rho - sigma) + tol on all rung pairs."""
    rhos = np.asarray(rhos, dtype=float)
    series = np.asarray(series, dtype=float)
    worst = -np.inf
    pair = (rhos[0], rhos[0])
    for a in range(len(rhos)):
        for b in range(len(rhos)):
            if rhos[a] < rhos[b]:   # sigma = rhos[a] < rho = rhos[b]
                viol = series[a] - series[b] - slack * (rhos[b] - rhos[a])
                if viol > worst:
                    worst = viol
                    pair = (float(rhos[a]), float(rhos[b]))
    return MonotonicityReport(
        passed=bool(worst <= tol), worst_violation=float(worst),
        worst_pair=pair, slack=float(slack), tol=float(tol),
    )


@dataclass
class GrowthReport:
    slope: float
    intercept: float
    max_residual: float
    expected: float
    tol: float

    @property
    def passed(self) -> bool:
        return abs(self.slope - self.expected) <= self.tol

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        return (
            f"[{status}] growth rate: log-log slope {self.slope:.4f} "
            f"vs expected {self.expected:g} (tol {self.tol:g}, "
            f"band {self.max_residual:.2e})"
        )


def growth_rate_check(v, A: CoefficientField, ladder: RadiusLadder, nu: float,
                      tol: float = 0.1) -> GrowthReport:
    """Fit log(rho^-n int_{B_rho^+} v^2) against log rho; slope should be 2 nu."""
    h_grid = _grid_h(v)
    n = _dim(v, A)
    ys = []
    for rho in ladder.rho_values:
        hb = geometry.halfball_quadrature(
            n, rho, spacing=h_grid, angular_count=_angular_count(rho, h_grid)
        )
        vals = v.evaluate(hb.nodes)
        ys.append(np.log(rho ** (-n) * hb.integrate(vals ** 2)))
    xs = np.log(ladder.rho_values)
    coeffs = np.polyfit(xs, ys, 1)
    fit = np.polyval(coeffs, xs)
    return GrowthReport(
        slope=float(coeffs[0]), intercept=float(coeffs[1]),
        max_residual=float(np.abs(fit - ys).max()),
        expected=2.0 * nu, tol=tol,
    )


# ---------------------------------------------------------------------------
# full profile


def default_slack_constant(A: CoefficientField, f_growth_constant: float = 0.0,
                           k_plus=None, k_minus=None) -> float:
    """0 in the constant-coefficient model case, engineering proxy otherwise."""
    k_const = (k_plus is None or k_plus.is_constant()) and (
        k_minus is None or k_minus.is_constant()
    )
    if A.is_constant() and abs(f_growth_constant) <= 1e-12 and k_const:
        return 0.0
    k_lip = 0.0
    pts = np.zeros((33, A.dim))
    pts[:, 0] = np.linspace(-0.9, 0.9, 33)
    for rule in (k_plus, k_minus):
        if rule is not None:
            for ax in range(A.dim - 1):
                k_lip = max(k_lip, float(np.abs(rule.d(ax).ev(pts)).max()))
    return 10.0 * (A.lipschitz_bound + f_growth_constant + k_lip)


@dataclass
class FrequencyProfile:
    """Sampled Almgren/Weiss/Monneau quantities over a radius ladder."""

    ladder: RadiusLadder
    H: np.ndarray
    I: np.ndarray
    D: np.ndarray
    G: np.ndarray
    K: np.ndarray
    K_band: np.ndarray           # (n_rungs, 2) lower/upper
    Phi: np.ndarray
    kappa: int
    slack_constant: float
    identity_residual: np.ndarray
    eps_quad: np.ndarray
    f_term: np.ndarray
    penalty_term: np.ndarray
    weiss: dict = dc_field(default_factory=dict)      # nu -> per-rung array
    monneau: dict = dc_field(default_factory=dict)    # label -> per-rung array
    G_bound: float = 0.0

    @property
    def rho_values(self) -> np.ndarray:
        return self.ladder.rho_values

    def truncation_active(self) -> np.ndarray:
        return self.K <= self.rho_values ** (2 * self.kappa)

    def csv_text(self, weiss_nu=None, monneau_label=None) -> str:
        """CSV body per the documented interface, 17 significant digits."""
        wn = None
        if weiss_nu is not None and weiss_nu in self.weiss:
            wn = self.weiss[weiss_nu]
        elif len(self.weiss) == 1:
            wn = next(iter(self.weiss.values()))
        mn = None
        if monneau_label is not None and monneau_label in self.monneau:
            mn = self.monneau[monneau_label]
        elif len(self.monneau) == 1:
            mn = next(iter(self.monneau.values()))
        lines = ["rho,H,I,D,G,K,Phi,W_nu,M"]
        for i, rho in enumerate(self.rho_values):
            row = [rho, self.H[i], self.I[i], self.D[i], self.G[i], self.K[i],
                   self.Phi[i],
                   wn[i] if wn is not None else float("nan"),
                   mn[i] if mn is not None else float("nan")]
            lines.append(",".join(f"{x:.17g}" for x in row))
        return "\n".join(lines) + "\n"

    def manifest(self) -> dict:
        return {
            "kappa": self.kappa,
            "slack_constant": self.slack_constant,
            "G_bound": self.G_bound,
            "rho": [float(r) for r in self.rho_values],
            "eps_quad": [float(e) for e in self.eps_quad],
            "identity_residual": [float(r) for r in self.identity_residual],
            "weiss_nus": sorted(self.weiss),
            "monneau_labels": sorted(self.monneau),
        }


def frequency_profile(
    v,
    A: CoefficientField,
    kappa: int,
    ladder: RadiusLadder,
    k_plus=None,
    k_minus=None,
    p: float = 2.0,
    f_eval=None,
    weiss_nus=(),
    monneau_tangents=None,
    slack_constant: float | None = None,
    f_growth_constant: float = 0.0,
    G_bound: float | None = None,
) -> FrequencyProfile:
    """Compute every per-rung quantity plus identity residuals and budgets."""
    h_grid = _grid_h(v)
    n = _dim(v, A)
    rhos = ladder.rho_values
    m = len(rhos)
    H = np.zeros(m)
    I = np.zeros(m)
    D = np.zeros(m)
    G = np.zeros(m)
    F = np.zeros(m)
    P_extra = np.zeros(m)
    eps = np.zeros(m)

    for i, rho in enumerate(rhos):
        ang = _angular_count(rho, h_grid)
        H[i] = compute_H(v, A, rho, ang)
        I[i] = compute_I(v, A, rho, ang)
        D[i] = compute_D(v, A, rho, k_plus, k_minus, p, ang)
        G[i] = compute_G(v, A, rho, H[i], ang)
        if f_eval is not None:
            hb = geometry.halfball_quadrature(n, rho, spacing=h_grid, angular_count=ang)
            F[i] = rho ** (2 - n) * hb.integrate(
                v.evaluate(hb.nodes) * np.asarray(f_eval(hb.nodes), dtype=float)
            )
        if p != 2.0 and (k_plus is not None or k_minus is not None):
            dk = geometry.disk_quadrature(n, rho, spacing=h_grid)
            vals = v.evaluate(dk.nodes)
            kp = k_plus.ev(dk.nodes) if k_plus is not None else 0.0
            km = k_minus.ev(dk.nodes) if k_minus is not None else 0.0
            pen = kp * np.maximum(vals, 0.0) ** p + km * np.maximum(-vals, 0.0) ** p
            P_extra[i] = (p - 2.0) / p * rho ** (2 - n) * dk.integrate(pen)

        # declared quadrature budget: angular+radial refinement + interpolation proxy
        base_radial = max(32, int(np.ceil(2 * rho / h_grid))) if h_grid else 32
        I_f = compute_I(v, A, rho, 2 * ang)
        D_f = compute_D(v, A, rho, k_plus, k_minus, p, 2 * ang, 2 * base_radial)
        F_f = F[i]
        if f_eval is not None:
            hb_f = geometry.halfball_quadrature(
                n, rho, spacing=h_grid, angular_count=2 * ang, radial_count=2 * base_radial
            )
            F_f = rho ** (2 - n) * hb_f.integrate(
                v.evaluate(hb_f.nodes) * np.asarray(f_eval(hb_f.nodes), dtype=float)
            )
        refine = abs(I_f - I[i]) + abs(D_f - D[i]) + abs(F_f - F[i])
        scale = abs(D[i]) + abs(I[i]) + H[i] + abs(F[i]) + abs(P_extra[i])
        interp = (h_grid / rho) ** 2 * scale if h_grid is not None else 1e-12 * scale
        eps[i] = 10.0 * (refine + interp)

    if G_bound is None:
        lip = A.lipschitz_bound
        G_bound = (n ** 2) * lip * (n + 2.0)
    K = np.zeros(m)
    K_band = np.zeros((m, 2))
    for i, rho in enumerate(rhos):
        K[i], band = compute_K(rhos, G, H, rho, G_bound)
        K_band[i] = band
    Phi = np.array(
        [compute_Phi(H[i], I[i], K[i], rhos[i], kappa) for i in range(m)]
    )

    weiss = {}
    for nu in weiss_nus:
        weiss[float(nu)] = rhos ** (-2.0 * float(nu)) * (I - float(nu) * H)
    monneau = {}
    for label, (tangent, nu) in (monneau_tangents or {}).items():
        monneau[label] = np.array(
            [compute_monneau(v, A, rho, tangent, nu) for rho in rhos]
        )

    if slack_constant is None:
        slack_constant = default_slack_constant(A, f_growth_constant, k_plus, k_minus)

    residual = D - I + F + P_extra
    return FrequencyProfile(
        ladder=ladder, H=H, I=I, D=D, G=G, K=K, K_band=K_band, Phi=Phi,
        kappa=kappa, slack_constant=slack_constant,
        identity_residual=residual, eps_quad=eps, f_term=F, penalty_term=P_extra,
        weiss=weiss, monneau=monneau, G_bound=G_bound,
    )
