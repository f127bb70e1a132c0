import numpy as np
import pytest

import thinlab as tl
from thinlab.manufactured import penalization_family
from oracles import log_solution_cmath


@pytest.mark.parametrize("p", [2, 3])
def test_slab_derivative_identity(p):
    w = tl.log_solution_w(p, 1.0)
    rng = np.random.default_rng(0)
    x1 = rng.uniform(-1.0, 1.0, 1000)
    pts = np.stack([x1, np.zeros_like(x1)], axis=1)
    dn = w.gradient(pts)[:, 1]
    assert np.abs(dn - np.maximum(x1, 0.0) ** (p - 1)).max() <= 1e-8


def test_value_against_cmath_oracle():
    w = tl.log_solution_w(2, 1.0)
    # frozen regression value at (x1, xn) = (0, 1): 1/(4 pi)
    assert abs(w(np.array([0.0, 1.0])) - 1.0 / (4.0 * np.pi)) < 1e-15
    rng = np.random.default_rng(5)
    pts = rng.uniform(-0.9, 0.9, size=(200, 2))
    pts[:, 1] = np.abs(pts[:, 1])
    for p in (2, 3, 4):
        wp = tl.log_solution_w(p, 0.7)
        vals = wp.evaluate(pts)
        oracle = np.array([log_solution_cmath(p, 0.7, a, b) for a, b in pts])
        assert np.abs(vals - oracle).max() < 1e-13


def test_value_at_origin_is_zero():
    w = tl.log_solution_w(2, 1.0)
    assert w(np.zeros(2)) == 0.0


def test_harmonicity_by_finite_differences():
    w = tl.log_solution_w(2, 1.0)
    rng = np.random.default_rng(1)
    pts = rng.uniform(0.15, 0.85, size=(100, 2))
    h = 1e-4
    lap = (w.evaluate(pts + [h, 0]) + w.evaluate(pts - [h, 0])
           + w.evaluate(pts + [0, h]) + w.evaluate(pts - [0, h])
           - 4 * w.evaluate(pts)) / h ** 2
    assert np.abs(lap).max() < 1e-6


def test_gradient_rule_matches_finite_differences():
    for field in (tl.log_solution_w(3, 1.0), tl.even_harmonic_polynomial(3, 2)):
        rng = np.random.default_rng(2)
        pts = rng.uniform(0.1, 0.8, size=(100, 2))
        h = 1e-6
        fd = np.stack([
            (field.evaluate(pts + [h, 0]) - field.evaluate(pts - [h, 0])) / (2 * h),
            (field.evaluate(pts + [0, h]) - field.evaluate(pts - [0, h])) / (2 * h),
        ], axis=1)
        assert np.abs(field.gradient(pts) - fd).max() < 1e-6


def test_even_harmonic_polynomial_values():
    p1 = tl.even_harmonic_polynomial(1, 2)
    p2 = tl.even_harmonic_polynomial(2, 2)
    pts = np.array([[0.3, 0.4], [0.5, 0.0], [-0.2, 0.7]])
    assert np.allclose(p1.evaluate(pts), pts[:, 0])
    assert np.allclose(p2.evaluate(pts), pts[:, 0] ** 2 - pts[:, 1] ** 2)
    # D_n vanishes on the slab for every degree
    p3 = tl.even_harmonic_polynomial(3, 2)
    assert p3.gradient(np.array([0.3, 0.0]))[1] == 0.0


def test_log_solution_not_c_p_minus_1_1():
    """The degree-(p-1) fit residual over B_rho grows as rho shrinks."""
    w = tl.log_solution_w(2, 1.0)

    def fit_ratio(rho, n=60):
        theta = np.linspace(0, np.pi, n)
        radii = np.linspace(rho / n, rho, n)
        R, T = np.meshgrid(radii, theta)
        pts = np.stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()], axis=1)
        V = np.stack([np.ones(len(pts)), pts[:, 0], pts[:, 1]], axis=1)
        vals = w.evaluate(pts)
        coef, *_ = np.linalg.lstsq(V, vals, rcond=None)
        return np.abs(vals - V @ coef).max() / rho ** 2

    assert fit_ratio(0.05) >= 1.5 * fit_ratio(0.4)


def test_penalization_family(grid33, identity_A):
    base = tl.ProblemSpec(grid=grid33, A=identity_A, k_plus="1", k_minus="1",
                          h="0", p=2, kappa=2, dirichlet_g="0")
    family = penalization_family(base, 4)
    assert family[0] is base
    slab = np.array([[0.3, 0.0], [0.5, 0.0]])
    for j, member in enumerate(family):
        assert np.allclose(member.k_minus.ev(slab), 10.0 ** j)
        assert np.allclose(member.k_plus.ev(slab), 1.0)


def test_penalization_family_zero_penalty_member(grid33, identity_A):
    base = tl.ProblemSpec(grid=grid33, A=identity_A, k_plus="0", k_minus="0",
                          h="0", p=2, kappa=2, dirichlet_g="x1")
    member = penalization_family(base, 3)[-1]
    result = tl.minimize(tl.assemble(member),
                         tl.ScalarField(grid33, np.zeros(grid33.shape)))
    assert result.weak_residual <= 1e-9  # pure Neumann branch solves cleanly
