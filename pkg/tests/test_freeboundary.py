import numpy as np
import pytest

import thinlab as tl
import thinlab.freeboundary as fb
from thinlab.errors import ResolutionError


def test_contact_set_full_and_empty(grid33):
    u = tl.ScalarField.from_function(grid33, lambda P: P[:, 0] ** 2)
    c_full = fb.extract_contact_set(u, "x1**2")
    assert c_full.mask.all()
    c_empty = fb.extract_contact_set(
        tl.ScalarField(grid33, np.ones(grid33.shape)), "0")
    assert not c_empty.mask.any()


def test_contact_set_one_sided(grid33):
    u = tl.ScalarField.from_function(grid33, lambda P: np.maximum(P[:, 0], 0.0) ** 2)
    c = fb.extract_contact_set(u, "0")
    xs = grid33.axes[0]
    inside = xs <= np.sqrt(c.tau_contact)
    assert np.array_equal(c.mask, inside)


def test_free_boundary_frontier_and_refinement(grid33):
    u = tl.ScalarField.from_function(grid33, lambda P: P[:, 0])
    c = fb.extract_contact_set(u, "0")
    pts = fb.extract_free_boundary(c, u, "0")
    assert len(pts) >= 1
    for p in pts:
        assert abs(p[0]) <= grid33.spacing ** 2    # refined within h^2
    # frontier correctness: no point returned from the mask interior
    assert fb.extract_free_boundary(fb.extract_contact_set(
        tl.ScalarField(grid33, np.zeros(grid33.shape)), "0")) == []


def test_free_boundary_empty_mask(grid33):
    u = tl.ScalarField(grid33, np.ones(grid33.shape))
    c = fb.extract_contact_set(u, "0")
    assert fb.extract_free_boundary(c, u, "0") == []


def test_classify_regular_point(grid33, identity_A):
    spec = tl.ProblemSpec(grid=grid33, A=identity_A, k_plus="0", k_minus="0",
                          h="0", p=2, kappa=2, dirichlet_g="x1")
    u = tl.ScalarField.from_function(grid33, lambda P: P[:, 0])
    pt = fb.classify_point(np.zeros(2), u, spec)
    assert pt.kind == "regular"
    assert pt.nu is None and pt.tangent is None


def test_classify_seeded_singular(seeded_quadratic):
    spec, result = seeded_quadratic
    contact = fb.extract_contact_set(result.u, spec.h)
    pts = fb.extract_free_boundary(contact, result.u, spec.h)
    assert pts
    classified = [fb.classify_point(p, result.u, spec) for p in pts]
    for c in classified:
        assert c.kind == "singular"
        assert c.nu == 2
        assert c.stratum_dim == 0
        assert c.tangent is not None and c.tangent.nondegenerate
        co = c.tangent.polynomial
        assert abs(co.coefficient((2, 0)) - 1.0) <= 5e-2
        assert abs(co.coefficient((0, 2)) + 1.0) <= 5e-2
    report = fb.stratify(classified)
    assert report["counts"] == {"2,0": len(classified)}


def test_classify_truncation_limited(grid65, identity_A):
    # u = 0 with obstacle -x1^4 and kappa = 2: the normalized field decays
    # faster than rho^kappa, so the profile is ceiling-limited
    spec = tl.ProblemSpec(grid=grid65, A=identity_A, k_plus="0", k_minus="0",
                          h="0 - x1**4", p=2, kappa=2, dirichlet_g="0")
    u = tl.ScalarField(grid65, np.zeros(grid65.shape))
    contact = fb.extract_contact_set(u, spec.h)
    pts = fb.extract_free_boundary(contact, u, spec.h)
    admissible = [p for p in pts if abs(p[0]) <= 0.95]
    assert admissible
    c = fb.classify_point(admissible[0], u, spec)
    assert c.kind == "truncation_limited"
    assert c.nu == spec.kappa


def test_classification_dichotomy_and_d_bound(seeded_quadratic):
    spec, result = seeded_quadratic
    contact = fb.extract_contact_set(result.u, spec.h)
    pts = fb.extract_free_boundary(contact, result.u, spec.h)
    for p in pts:
        c = fb.classify_point(p, result.u, spec)
        assert c.kind in ("regular", "singular", "truncation_limited")
        if c.kind == "singular":
            assert c.stratum_dim <= spec.grid.dim - 2


def test_classify_rejects_window_edge(grid33, identity_A):
    spec = tl.ProblemSpec(grid=grid33, A=identity_A, k_plus="0", k_minus="0",
                          h="0", p=2, kappa=2, dirichlet_g="x1")
    u = tl.ScalarField.from_function(grid33, lambda P: P[:, 0])
    with pytest.raises(ResolutionError):
        fb.classify_point(np.array([0.97, 0.0]), u, spec)


def test_regular_sweep_crossing_continuity(grid65, identity_A):
    """Refined crossing moves continuously with the family parameter."""
    crossings = []
    params = np.linspace(-0.3, 0.3, 13)
    for t in params:
        u = tl.ScalarField.from_function(
            grid65, lambda P, t=t: np.maximum(P[:, 0] - t, 0.0) ** 2 + P[:, 1] ** 2)
        c = fb.extract_contact_set(u, "0")
        pts = [p for p in fb.extract_free_boundary(c, u, "0")
               if abs(p[0] - t) < 0.1]
        assert pts, f"no crossing found near t={t}"
        crossings.append(max(p[0] for p in pts))
    jumps = np.abs(np.diff(crossings))
    step = params[1] - params[0]
    assert jumps.max() <= step + 5 * grid65.spacing


def test_stratify_groups_and_line_fit(grid65):
    # synthetic n=3 instance whose singular set is the x2-axis
    A3 = tl.CoefficientField.identity(3)
    g3 = tl.build_grid(3, 33)
    spec = tl.ProblemSpec(grid=g3, A=A3, k_plus="0", k_minus="0", h="0",
                          p=2, kappa=3, dirichlet_g="x1**2 - x3**2")
    u = tl.ScalarField.from_function(g3, lambda P: P[:, 0] ** 2 - P[:, 2] ** 2)
    contact = fb.extract_contact_set(u, spec.h)
    pts = fb.extract_free_boundary(contact, u, spec.h)
    admissible = [p for p in pts if np.abs(p[:2]).max() <= 0.45]
    assert admissible
    classified = [fb.classify_point(p, u, spec) for p in admissible[:6]]
    report = fb.stratify(classified)
    assert set(report["counts"]) == {"2,1"}
    key = (2, 1)
    assert report["line_fits"][key]["max_residual"] <= 2 * g3.spacing
    direction = np.abs(report["line_fits"][key]["direction"])
    assert abs(direction[1] - 1.0) < 1e-6


def test_stratify_empty_for_regular_only():
    pt = fb.FreeBoundaryPoint(location=np.zeros(2), kind="regular")
    report = fb.stratify([pt])
    assert report["counts"] == {}


def test_recenter_variable_coefficients(grid65, variable_A):
    spec = tl.ProblemSpec(grid=grid65, A=variable_A, k_plus="1", k_minus="2",
                          h="0", p=2, kappa=2, dirichlet_g="x1")
    result = tl.minimize(tl.assemble(spec),
                         tl.ScalarField(grid65, np.zeros(grid65.shape)))
    x0 = np.array([0.25, 0.0])
    local = fb.recenter(spec, result.u, x0)
    # frozen matrix is the identity in the recentered frame
    A0 = local.A.matrices(np.zeros((1, 2)))[0]
    assert np.abs(A0 - np.eye(2)).max() < 1e-12
    # the recentered field evaluates the translated solution
    y = np.array([[0.1, 0.2]])
    expect = result.u.evaluate(x0 + y @ local.L.T)
    assert abs(local.field.evaluate(y)[0] - expect) < 1e-12
