"""Closed-form ground-truth fields.

The log-singular solution w is the real part of

    (-i)^p kappa_plus (x_n + i x_1)^p ( log(x_n + i x_1)/(pi p) - 1/(pi p^2) + i/(2p) )

with the branch of log fixed on the closed right half-plane {x_n >= 0} by
log(x_n + i0) = log|x_n|.  The branch is load-bearing: it makes the slab
derivative D_n w(x', 0) equal kappa_plus (x_1^+)^(p-1), which is the
Neumann datum of the blow-up limit problem.  w is harmonic off the origin,
is C^(p-1) up to the slab but not C^(p-1,1), and only sees the (x_1, x_n)
coordinates.

Complex arithmetic is done on real pairs with an explicitly coded modulus
and argument (atan2(x_1, x_n) in [-pi/2, pi/2]); no library branch
conventions are assumed, so values are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expressions as ex
from .errors import SpecError
from .fields import ProblemSpec

__all__ = [
    "AnalyticField",
    "log_solution_w",
    "even_harmonic_polynomial",
    "penalization_family",
]


@dataclass
class AnalyticField:
    """Closed-form field with an evaluation rule and a gradient rule."""

    evaluate_rule: object
    gradient_rule: object
    description: str = ""
    regularity_tag: str = ""

    def evaluate(self, points):
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        out = np.asarray(self.evaluate_rule(np.atleast_2d(pts)), dtype=float)
        return float(out[0]) if single else out

    def gradient(self, points):
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        out = np.asarray(self.gradient_rule(np.atleast_2d(pts)), dtype=float)
        return out[0] if single else out

    def __call__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            return float(self.evaluate(pts[None, :])[0])
        return self.evaluate(pts)


def _half_plane_log(xn, x1):
    """Principal log of z = x_n + i x_1 restricted to {x_n >= 0} \\ {0}.

    Returns (Re log z, Im log z) with Im = atan2(x_1, x_n) in [-pi/2, pi/2],
    so log(x_n + i0) = log|x_n| on the positive real axis.
    """
    r2 = xn * xn + x1 * x1
    with np.errstate(divide="ignore"):
        re = 0.5 * np.log(r2)
    im = np.arctan2(x1, xn)
    return re, im


def _int_power(re, im, p):
    """(re + i im)^p for integer p >= 0 by repeated multiplication."""
    out_re = np.ones_like(re)
    out_im = np.zeros_like(im)
    for _ in range(p):
        out_re, out_im = out_re * re - out_im * im, out_re * im + out_im * re
    return out_re, out_im


_MINUS_I_POW = {0: (1.0, 0.0), 1: (0.0, -1.0), 2: (-1.0, 0.0), 3: (0.0, 1.0)}


def log_solution_w(p: int, kappa_plus: float = 1.0) -> AnalyticField:
    """The log-singular half-space solution for integer p >= 2.

    Harmonic in {x_n > 0} with D_n w(x', 0) = kappa_plus (x_1^+)^(p-1);
    w(0) = 0 by continuity.  In three dimensions the field is constant in
    the middle coordinate.
    """
    p = int(p)
    if p < 2:
        raise SpecError("log_solution_w requires integer p >= 2")
    rot_re, rot_im = _MINUS_I_POW[p % 4]

    def w_eval(pts):
        x1 = pts[:, 0]
        xn = pts[:, -1]
        if np.any(xn < -1e-14):
            raise SpecError("log_solution_w is defined on the closed upper half-space")
        log_re, log_im = _half_plane_log(np.maximum(xn, 0.0), x1)
        zp_re, zp_im = _int_power(np.maximum(xn, 0.0), x1, p)
        inner_re = log_re / (np.pi * p) - 1.0 / (np.pi * p * p)
        inner_im = log_im / (np.pi * p) + 1.0 / (2.0 * p)
        prod_re = zp_re * inner_re - zp_im * inner_im
        prod_im = zp_re * inner_im + zp_im * inner_re
        out = kappa_plus * (rot_re * prod_re - rot_im * prod_im)
        origin = (x1 == 0.0) & (xn <= 0.0)
        out = np.where(origin, 0.0, out)
        return out

    def w_grad(pts):
        # W'(z) = (-i)^p kappa_plus z^(p-1) (log z / pi + i/2); z = x_n + i x_1
        # D_n w = Re W', D_1 w = -Im W'
        x1 = pts[:, 0]
        xn = np.maximum(pts[:, -1], 0.0)
        log_re, log_im = _half_plane_log(xn, x1)
        zq_re, zq_im = _int_power(xn, x1, p - 1)
        inner_re = log_re / np.pi
        inner_im = log_im / np.pi + 0.5
        prod_re = zq_re * inner_re - zq_im * inner_im
        prod_im = zq_re * inner_im + zq_im * inner_re
        wp_re = kappa_plus * (rot_re * prod_re - rot_im * prod_im)
        wp_im = kappa_plus * (rot_re * prod_im + rot_im * prod_re)
        origin = (x1 == 0.0) & (pts[:, -1] <= 0.0)
        out = np.zeros_like(pts)
        out[:, 0] = np.where(origin, 0.0, -wp_im)
        out[:, -1] = np.where(origin, 0.0, wp_re)
        return out

    return AnalyticField(
        w_eval,
        w_grad,
        description=f"log-singular mixed-problem solution, p={p}, kappa_plus={kappa_plus}",
        regularity_tag=f"C^{p - 1} but not C^{p - 1},1",
    )


def even_harmonic_polynomial(nu: int, dim: int = 2) -> AnalyticField:
    """Re (x_1 + i x_n)^nu: harmonic, homogeneous of degree nu, even in x_n."""
    nu = int(nu)
    if nu < 1:
        raise SpecError("nu must be >= 1")

    def p_eval(pts):
        re, im = _int_power(pts[:, 0], pts[:, -1], nu)
        return re

    def p_grad(pts):
        # d/dx1 Re z^nu = nu Re z^(nu-1); d/dxn Re z^nu = -nu Im z^(nu-1)
        re, im = _int_power(pts[:, 0], pts[:, -1], nu - 1)
        out = np.zeros_like(pts)
        out[:, 0] = nu * re
        out[:, -1] = -nu * im
        return out

    return AnalyticField(
        p_eval,
        p_grad,
        description=f"Re (x1 + i xn)^{nu}",
        regularity_tag="polynomial",
    )


def penalization_family(base: ProblemSpec, num_members: int = 5) -> list:
    """Specs with k_minus multiplied by 10^j, j = 0..num_members-1, k_plus fixed.

    The j-th member approaches the one-sided (Signorini-type) limit as the
    lower penalty stiffens; the j = 0 member is the base spec itself.
    """
    out = []
    for j in range(num_members):
        if j == 0:
            out.append(base)
        else:
            scaled = ex.mul(ex.const(10.0 ** j), base.k_minus)
            out.append(base.with_k_minus(scaled))
    return out
