import numpy as np
import pytest

import thinlab as tl
import thinlab.blowup as bu
import thinlab.diagnostics as dg
from thinlab.errors import DegenerateNormalizationError, ResolutionError
from thinlab.taylor import Polynomial


@pytest.fixture(scope="module")
def ladder():
    return dg.RadiusLadder.default(1.0 / 32)


def test_even_harmonic_basis_dimensions():
    assert len(bu.even_harmonic_basis(2, 2)) == 1
    assert len(bu.even_harmonic_basis(2, 3)) == 1
    assert len(bu.even_harmonic_basis(3, 2)) == 3
    # anisotropic frozen matrix still yields a full kernel
    a0 = np.diag([2.0, 1.0])
    basis = bu.even_harmonic_basis(2, 2, a0)
    assert len(basis) == 1
    p = basis[0]
    assert abs(2.0 * p.coefficient((2, 0)) * 2 + 1.0 * p.coefficient((0, 2)) * 2) < 1e-12


def test_rescale_almgren_normalization(identity_A):
    v1 = tl.even_harmonic_polynomial(1, 2)
    r = bu.rescale(v1, np.zeros(2), 0.5, "almgren", identity_A, window_cells=33)
    assert abs(r.normalization - np.sqrt(0.25 * np.pi / 2)) < 1e-12
    assert abs(r.hemisphere_mass(identity_A) - 1.0) <= 1e-3


def test_rescale_homogeneous_exact(identity_A):
    v1 = tl.even_harmonic_polynomial(1, 2)
    r = bu.rescale(v1, np.zeros(2), 0.3, ("homogeneous", 1), identity_A,
                   window_cells=33)
    ref = tl.ScalarField.from_function(r.field.grid, lambda P: P[:, 0])
    assert np.abs(r.field.values - ref.values).max() < 1e-13


def test_rescale_degenerate_and_window_errors(identity_A):
    zero = tl.AnalyticField(lambda P: np.zeros(len(P)), lambda P: np.zeros_like(P))
    with pytest.raises(DegenerateNormalizationError):
        bu.rescale(zero, np.zeros(2), 0.5, "almgren", identity_A)
    v1 = tl.even_harmonic_polynomial(1, 2)
    with pytest.raises(ResolutionError):
        bu.rescale(v1, np.array([0.8, 0.0]), 0.5, "almgren", identity_A)


def test_rescale_grid_field_mass(seeded_quadratic):
    spec, result = seeded_quadratic
    norm = tl.normalize(spec, result.u)
    r = bu.rescale(norm.v, np.zeros(2), 0.4, "almgren", spec.A)
    assert abs(r.hemisphere_mass(spec.A) - 1.0) <= 1e-3


def test_estimate_frequency_examples(identity_A, ladder):
    for nu in (1, 2):
        v = tl.even_harmonic_polynomial(nu, 2)
        prof = dg.frequency_profile(v, identity_A, kappa=4, ladder=ladder)
        est = bu.estimate_frequency(prof)
        assert abs(est.nu_hat - nu) <= 0.02
        assert est.nu_int == nu
        assert est.confidence >= 0.95
        assert not est.truncation_limited


def test_estimate_frequency_truncation_flag(identity_A, ladder):
    v = tl.AnalyticField(
        lambda P: P[:, 0] ** 2 * P[:, 1] ** 2,
        lambda P: np.stack([2 * P[:, 0] * P[:, 1] ** 2,
                            2 * P[:, 0] ** 2 * P[:, 1]], axis=1))
    prof = dg.frequency_profile(v, identity_A, kappa=2, ladder=ladder)
    est = bu.estimate_frequency(prof)
    assert est.truncation_limited
    assert est.nu_int == 2


def test_estimate_frequency_needs_six_rungs(identity_A):
    v = tl.even_harmonic_polynomial(1, 2)
    short = dg.RadiusLadder(np.array([0.9, 0.8, 0.7]))
    prof = dg.frequency_profile(v, identity_A, kappa=4, ladder=short)
    with pytest.raises(ResolutionError):
        bu.estimate_frequency(prof)


def test_fit_tangent_exact_member(ladder):
    v = tl.even_harmonic_polynomial(2, 2)
    t = bu.fit_tangent(v, np.zeros(2), 2, ladder)
    assert abs(t.polynomial.coefficient((2, 0)) - 1.0) <= 1e-8
    assert abs(t.polynomial.coefficient((0, 2)) + 1.0) <= 1e-8
    assert t.harmonic_residual <= 1e-8
    assert t.fit_residual <= 1e-8
    assert t.nondegenerate


def test_fit_tangent_perturbation_recovery(ladder):
    v = tl.AnalyticField(
        lambda P: (P[:, 0] ** 2 - P[:, 1] ** 2)
        + 1e-3 * (P[:, 0] ** 3 - 3 * P[:, 0] * P[:, 1] ** 2),
        lambda P: np.stack([
            2 * P[:, 0] + 3e-3 * (P[:, 0] ** 2 - P[:, 1] ** 2),
            -2 * P[:, 1] - 6e-3 * P[:, 0] * P[:, 1],
        ], axis=1))
    t = bu.fit_tangent(v, np.zeros(2), 2, ladder)
    assert abs(t.polynomial.coefficient((2, 0)) - 1.0) <= 1e-3
    assert abs(t.polynomial.coefficient((0, 2)) + 1.0) <= 1e-3


def test_fit_tangent_flags_zero_field(ladder):
    zero = tl.AnalyticField(lambda P: np.zeros(len(P)), lambda P: np.zeros_like(P))
    t = bu.fit_tangent(zero, np.zeros(2), 2, ladder)
    assert not t.nondegenerate


def test_frequency_tangent_consistency(identity_A, ladder):
    """The estimated integer matches the degree with the smallest fit residual."""
    v = tl.even_harmonic_polynomial(2, 2)
    prof = dg.frequency_profile(v, identity_A, kappa=4, ladder=ladder)
    est = bu.estimate_frequency(prof)
    residuals = {}
    for nu in (1, 2, 3):
        t = bu.fit_tangent(v, np.zeros(2), nu, ladder)
        scale = max(t.growth_lower_bound, 1e-30)
        residuals[nu] = t.fit_residual / scale
    assert min(residuals, key=residuals.get) == est.nu_int


def test_invariant_subspace_examples(ladder):
    p = Polynomial(2, {(2, 0): 1.0, (0, 2): -1.0})
    d, basis = bu.invariant_subspace_of(p, 2)
    assert d == 0
    p3 = Polynomial(3, {(2, 0, 0): 1.0, (0, 0, 2): -1.0})
    d, basis = bu.invariant_subspace_of(p3, 3)
    assert d == 1
    assert np.allclose(np.abs(basis[0]), [0, 1, 0])
    p3b = Polynomial(3, {(2, 0, 0): 1.0, (0, 2, 0): 1.0, (0, 0, 2): -2.0})
    assert bu.invariant_subspace_of(p3b, 3)[0] == 0


def test_invariant_subspace_translation_consistency():
    p3 = Polynomial(3, {(2, 0, 0): 1.0, (0, 0, 2): -1.0})
    d, basis = bu.invariant_subspace_of(p3, 3)
    rng = np.random.default_rng(12)
    X = rng.uniform(-1, 1, size=(100, 3))
    for z in basis:
        shift = p3.evaluate(X + 0.1 * z) - p3.evaluate(X)
        assert np.abs(shift).max() <= 1e-8


def test_tangent_continuity_report():
    def tp(c):
        return bu.TangentPolynomial(
            nu=2, dim=2, polynomial=Polynomial(2, {(2, 0): c, (0, 2): -c}),
            harmonic_residual=0.0, invariant_dim=0,
            invariant_basis=np.zeros((0, 2)))

    pts = [np.array([0.0, 0.0]), np.array([0.2, 0.0]), np.array([0.4, 0.0])]
    same = bu.tangent_continuity_report(pts, [tp(1.0)] * 3)
    assert all(env == 0.0 for _, env in same["envelope"])
    mixed = bu.tangent_continuity_report(pts[:2], [tp(1.0), tp(1.1)])
    d, env = mixed["envelope"][0]
    assert abs(d - 0.2) < 1e-12 and env >= 0.1
