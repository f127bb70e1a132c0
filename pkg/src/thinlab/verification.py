"""Config-scoped verification pipeline behind the CLI verify subcommand.

Runs the configured instance end to end and checks every property that is
decidable for it: spec hypotheses, solver convergence and the tent-function
weak residual, energy descent, minimizer uniqueness from a perturbed
initial, forcing growth, the per-rung surface-volume identity against the
declared quadrature budget, positivity and the K/H sandwich, and the
almost-monotonicity of the frequency, Weiss, and Monneau series at the
instance's free-boundary point (skipped with a note when the window has
none).  One CheckResult per property; the CLI prints one pass/fail line
each and exits nonzero if any fail.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diagnostics as dg
from . import freeboundary as fb
from .blowup import estimate_frequency, fit_tangent
from .errors import NonConvergedError, ResolutionError
from .fields import ProblemSpec, ScalarField, validate_spec
from .solver import assemble, minimize
from .taylor import normalize

__all__ = ["CheckResult", "run_verification"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"[{'pass' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def _find_crossing(u: ScalarField, spec: ProblemSpec):
    """First admissible free-boundary point of the solved instance, or None."""
    contact = fb.extract_contact_set(u, spec.h)
    points = fb.extract_free_boundary(contact, u, spec.h)
    if not points:
        # fall back to a sign crossing of u - h along the slab
        grid = spec.grid
        slab_nodes = grid.nodes().reshape(grid.shape + (grid.dim,))[..., 0, :]
        slab_nodes = slab_nodes.reshape(-1, grid.dim)
        diff = u.slab_values().ravel() - spec.h.ev(slab_nodes)
        sign = np.sign(diff)
        flips = np.flatnonzero(np.diff(sign.reshape(grid.shape[:-1]), axis=0).ravel())
        if grid.dim != 2 or len(flips) == 0:
            return None
        i = flips[0]
        x = grid.axes[0]
        a, b, fa, fbv = x[i], x[i + 1], diff[i], diff[i + 1]
        t = fa / (fa - fbv)
        points = [np.array([a + t * (b - a), 0.0])]
    for p in points:
        if np.abs(p[: spec.grid.dim - 1]).max() <= 1.0 - fb.EDGE_MARGIN:
            return p
    return None


def run_verification(
    spec: ProblemSpec,
    tol: float = 1e-10,
    max_iter: int = 100,
    seed: int = 0,
    mono_tol: float = 1e-3,
):
    """Run the verification checks; returns (checks, artifacts).

    artifacts holds the solve result, normalized problem, and profiles for
    the CLI to serialize without recomputation.
    """
    checks: list[CheckResult] = []
    artifacts: dict = {}

    report = validate_spec(spec, seed=seed)
    checks.append(CheckResult(
        "spec hypotheses", report.passed,
        "all structural hypotheses hold" if report.passed
        else "failed: " + ", ".join(report.failed_names()),
    ))
    if not report.passed:
        return checks, artifacts

    energy = assemble(spec, check=False)
    zero = ScalarField(spec.grid, np.zeros(spec.grid.shape))
    try:
        result = minimize(energy, zero, tol=tol, max_iter=max_iter)
    except NonConvergedError as err:
        checks.append(CheckResult("solver convergence", False, str(err)))
        return checks, artifacts
    artifacts["solve"] = result
    checks.append(CheckResult(
        "solver convergence", True,
        f"{result.iterations} Newton steps, gradient_norm={result.gradient_norm:.3e}",
    ))
    checks.append(CheckResult(
        "weak residual <= 10 tol", result.weak_residual <= 10.0 * tol,
        f"weak_residual={result.weak_residual:.3e} vs {10.0 * tol:.1e}",
    ))
    hist = np.array(result.energy_history)
    descent = bool(np.all(np.diff(hist) <= 1e-12 * (1.0 + np.abs(hist[:-1]))))
    checks.append(CheckResult(
        "energy descent", descent, f"{len(hist)} recorded energies, nonincreasing",
    ))

    rng = np.random.default_rng(seed)
    perturbed = ScalarField(spec.grid, rng.standard_normal(spec.grid.shape))
    result2 = minimize(energy, perturbed, tol=tol, max_iter=max_iter)
    gap = float(np.abs(result.u.values - result2.u.values).max())
    checks.append(CheckResult(
        "uniqueness from perturbed initial", gap <= 1e-8, f"max nodal gap {gap:.2e}",
    ))

    norm = normalize(spec, result.u)
    artifacts["normalized"] = norm
    checks.append(CheckResult(
        "forcing growth |f| <= C |x|^(kappa-1)", norm.f_growth_pass,
        f"constant {norm.f_growth_constant:.3e}",
    ))

    ladder = dg.RadiusLadder.default(spec.grid.spacing)
    profile = dg.frequency_profile(
        norm.v, spec.A, kappa=spec.kappa, ladder=ladder,
        k_plus=spec.k_plus, k_minus=spec.k_minus, p=spec.p,
        f_eval=norm.f_eval, f_growth_constant=norm.f_growth_constant,
    )
    artifacts["profile"] = profile

    ok_ident = bool(np.all(np.abs(profile.identity_residual) <= profile.eps_quad))
    checks.append(CheckResult(
        "surface-volume identity within eps_quad", ok_ident,
        f"max residual {np.abs(profile.identity_residual).max():.2e}, "
        f"min budget {profile.eps_quad.min():.2e}",
    ))
    pos = bool(np.all(profile.H >= 0) and np.all(profile.K >= 0))
    d_pos = bool(np.all(profile.D >= -1e-12)) if norm.f_growth_constant <= 1e-10 else True
    checks.append(CheckResult(
        "positivity H, K (and D when f = 0)", pos and d_pos,
        f"min H {profile.H.min():.2e}, min K {profile.K.min():.2e}",
    ))
    C_s = profile.G_bound
    ratio = profile.K / np.where(profile.H > 0, profile.H, 1.0)
    lo, hi = np.exp(-C_s * 0.9), np.exp(C_s * 0.9)
    sandwich = bool(np.all((ratio >= lo - 1e-12) & (ratio <= hi + 1e-12)))
    checks.append(CheckResult(
        "K/H sandwich", sandwich,
        f"K/H in [{ratio.min():.6f}, {ratio.max():.6f}] vs [{lo:.6f}, {hi:.6f}]",
    ))

    x_star = _find_crossing(result.u, spec)
    if x_star is None:
        checks.append(CheckResult(
            "almost-monotonicity at free boundary", True,
            "no free-boundary point in window; skipped",
        ))
        return checks, artifacts
    artifacts["free_boundary_point"] = x_star

    try:
        local = fb.recenter(spec, result.u, x_star)
    except ResolutionError as err:
        checks.append(CheckResult(
            "almost-monotonicity at free boundary", True, f"skipped: {err}",
        ))
        return checks, artifacts
    prof_loc = dg.frequency_profile(
        local.field, local.A, kappa=local.kappa, ladder=local.ladder,
        k_plus=local.k_plus, k_minus=local.k_minus, p=local.p,
        f_eval=local.f_eval, f_growth_constant=norm.f_growth_constant,
    )
    artifacts["local_profile"] = prof_loc
    artifacts["local"] = local
    est = estimate_frequency(prof_loc)
    artifacts["frequency_estimate"] = est
    C = prof_loc.slack_constant
    rhos = prof_loc.rho_values
    series = np.exp(C * rhos) * prof_loc.Phi + C * np.exp(C) * rhos
    rep_phi = dg.check_almost_monotone(rhos, series, 0.0, mono_tol)
    checks.append(CheckResult(
        "Almgren frequency almost-monotone", rep_phi.passed,
        f"worst violation {rep_phi.worst_violation:.2e} (tol {mono_tol:g})",
    ))

    nu = max(est.nu_int, 1)
    weiss = rhos ** (-2.0 * nu) * (prof_loc.I - nu * prof_loc.H)
    rep_w = dg.check_almost_monotone(rhos, weiss, C, mono_tol)
    checks.append(CheckResult(
        f"Weiss functional (nu={nu}) almost-monotone", rep_w.passed,
        f"worst violation {rep_w.worst_violation:.2e}",
    ))

    tangent = fit_tangent(local.field, np.zeros(spec.grid.dim), nu, local.ladder)
    artifacts["tangent"] = tangent
    monneau = np.array([
        dg.compute_monneau(local.field, local.A, r, tangent, nu) for r in rhos
    ])
    rep_m = dg.check_almost_monotone(rhos, monneau, C, mono_tol)
    checks.append(CheckResult(
        f"Monneau functional (nu={nu}) almost-monotone", rep_m.passed,
        f"worst violation {rep_m.worst_violation:.2e}",
    ))
    checks.append(CheckResult(
        "nondegeneracy flag", tangent.nondegenerate,
        f"fitted lower bound {tangent.growth_lower_bound:.3e}",
    ))
    return checks, artifacts
