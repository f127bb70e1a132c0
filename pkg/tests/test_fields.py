import numpy as np
import pytest

import thinlab as tl
from thinlab.fields import b_at, div_b_radial, mu_at


def test_validate_identity_passes(grid33, identity_A):
    spec = tl.ProblemSpec(grid=grid33, A=identity_A, k_plus="0", k_minus="0",
                          h="0", p=2, kappa=2, dirichlet_g="0")
    report = tl.validate_spec(spec)
    assert report.passed, str(report)


def test_validate_variable_coefficients(grid33):
    A = tl.CoefficientField([["1 + x1**2", "0"], ["0", "1"]],
                            ellipticity=(1.0, 2.0), lipschitz_bound=2.0)
    spec = tl.ProblemSpec(grid=grid33, A=A, k_plus="1", k_minus="1", h="0",
                          p=2, kappa=2, dirichlet_g="x1")
    report = tl.validate_spec(spec)
    assert report.passed, str(report)


def test_validate_flags_boundary_normalization(grid33):
    A = tl.CoefficientField([["1", "0.1"], ["0.1", "1"]],
                            ellipticity=(0.9, 1.1), lipschitz_bound=0.0)
    spec = tl.ProblemSpec(grid=grid33, A=A, k_plus="0", k_minus="0", h="0",
                          p=2, kappa=2, dirichlet_g="0")
    report = tl.validate_spec(spec)
    assert not report.passed
    assert any("boundary normalization" in n for n in report.failed_names())


def test_validate_blocks_solver_entry(grid33):
    A = tl.CoefficientField([["1", "0.1"], ["0.1", "1"]],
                            ellipticity=(0.9, 1.1), lipschitz_bound=0.0)
    spec = tl.ProblemSpec(grid=grid33, A=A, k_plus="0", k_minus="0", h="0",
                          p=2, kappa=2, dirichlet_g="0")
    with pytest.raises(tl.SpecError, match="hypothesis"):
        tl.assemble(spec)


def test_mu_examples(identity_A):
    assert mu_at(identity_A, [0.3, 0.4]) == 1.0
    assert mu_at(identity_A, [0.0, 0.0]) == 1.0   # continuity value at the origin
    A = tl.CoefficientField([["1 + x1**2", "0"], ["0", "1"]],
                            ellipticity=(1.0, 2.0), lipschitz_bound=2.0)
    assert abs(mu_at(A, [1.0, 0.0]) - 2.0) < 1e-14
    assert abs(mu_at(A, [0.0, 1.0]) - 1.0) < 1e-14


def test_b_examples(identity_A):
    assert np.abs(b_at(identity_A, [0.2, 0.5])).max() == 0.0
    A = tl.CoefficientField([["1 + x1**2", "0"], ["0", "1"]],
                            ellipticity=(1.0, 2.0), lipschitz_bound=2.0)
    b = b_at(A, [0.5, 0.0])
    assert abs(b[0, 0] - 0.25) < 1e-15
    assert abs(b[0, 1]) == abs(b[1, 0]) == abs(b[1, 1]) == 0.0


def test_b_linear_bound_sampled():
    A = tl.CoefficientField([["1 + x1**2", "0"], ["0", "1"]],
                            ellipticity=(1.0, 2.0), lipschitz_bound=2.0)
    rng = np.random.default_rng(11)
    pts = rng.uniform(-1, 1, size=(1000, 2))
    pts[:, 1] = np.abs(pts[:, 1])
    pts = pts[np.linalg.norm(pts, axis=1) > 1e-6]
    B = A.b(pts)
    ratio = np.abs(B).max(axis=(1, 2)) / np.linalg.norm(pts, axis=1)
    assert ratio.max() <= A.lipschitz_bound + 1e-12


def test_b_symmetry_exact():
    A = tl.CoefficientField([["1 + x1**2", "x1*x2/8"], ["x1*x2/8", "1"]],
                            ellipticity=(0.5, 2.5), lipschitz_bound=2.0)
    rng = np.random.default_rng(2)
    pts = rng.uniform(-1, 1, size=(200, 2))
    B = A.b(pts)
    assert np.array_equal(B, np.swapaxes(B, 1, 2))


def test_div_b_radial_identity_is_zero(identity_A):
    rng = np.random.default_rng(0)
    pts = rng.uniform(0.1, 0.9, size=(100, 2))
    assert np.abs(identity_A.div_b_radial(pts)).max() == 0.0


def test_div_b_radial_hand_value():
    A = tl.CoefficientField([["1 + x1**2", "0"], ["0", "1"]],
                            ellipticity=(1.0, 2.0), lipschitz_bound=2.0)
    for rho in (0.25, 0.5, 0.8):
        # D_1(x1^2 * x1/|x|) along the positive x1-axis equals 2 rho
        assert abs(div_b_radial(A, [rho, 0.0]) - 2 * rho) < 1e-12


def test_div_b_radial_matches_finite_differences():
    A = tl.CoefficientField([["1 + x1**2/4", "x1*x2/8"], ["x1*x2/8", "1 + x2**2/8"]],
                            ellipticity=(0.5, 2.0), lipschitz_bound=1.0)
    rng = np.random.default_rng(4)
    pts = rng.uniform(0.15, 0.8, size=(100, 2))
    analytic = A.div_b_radial(pts)
    h = 1e-6
    fd = np.zeros(len(pts))
    for i in range(2):
        for j in range(2):
            step = np.zeros(2)
            step[i] = h

            def comp(q, jj=j):
                r = np.linalg.norm(q, axis=1)
                return A.b(q)[:, i, jj] * q[:, jj] / r

            fd += (comp(pts + step) - comp(pts - step)) / (2 * h)
    assert np.abs(analytic - fd).max() < 1e-6


def test_mu_bounds_and_linearity():
    A = tl.CoefficientField([["1 + x1**2/4", "0"], ["0", "1"]],
                            ellipticity=(1.0, 1.25), lipschitz_bound=0.5)
    rng = np.random.default_rng(9)
    pts = rng.uniform(-1, 1, size=(10000, 2))
    pts[:, 1] = np.abs(pts[:, 1])
    mu = A.mu(pts)
    lam, Lam = A.ellipticity
    assert mu.min() >= lam - 1e-12 and mu.max() <= Lam + 1e-12
    r = np.linalg.norm(pts, axis=1)
    keep = r > 1e-8
    C = A.lipschitz_bound * A.dim ** 2
    assert (np.abs(mu[keep] - 1.0) <= C * r[keep] + 1e-12).all()
