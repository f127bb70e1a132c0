import numpy as np
import pytest

import thinlab as tl
from thinlab.errors import DomainError, SpecError
from oracles import hemisphere_moment_sympy


def test_build_grid_spacing():
    g = tl.build_grid(2, 129)
    assert g.spacing == 2.0 / 128
    assert g.shape == (129, 65)


def test_build_grid_rejects_even_count():
    with pytest.raises(SpecError, match="odd"):
        tl.build_grid(2, 8)


def test_build_grid_3d_shape():
    g = tl.build_grid(3, 65)
    assert g.shape == (65, 65, 33)
    assert g.num_nodes == 65 * 65 * 33


def test_grid_origin_and_slab_are_nodes():
    g = tl.build_grid(2, 33)
    assert 0.0 in g.axes[0] and g.axes[1][0] == 0.0
    assert g.spacing * (g.cells_per_axis - 1) == 2.0


def test_interpolation_reproduces_multilinear():
    g = tl.build_grid(2, 17)
    f = tl.ScalarField.from_function(g, lambda P: 2.0 - 0.3 * P[:, 0] + 0.7 * P[:, 1]
                                     + 0.2 * P[:, 0] * P[:, 1])
    rng = np.random.default_rng(7)
    pts = rng.uniform(0, 1, size=(100, 2)) * [2, 1] - [1, 0]
    expect = 2.0 - 0.3 * pts[:, 0] + 0.7 * pts[:, 1] + 0.2 * pts[:, 0] * pts[:, 1]
    assert np.abs(tl.interpolate(f, pts) - expect).max() < 1e-13


def test_interpolation_quadratic_edge_midpoint_error():
    g = tl.build_grid(2, 33)
    h = g.spacing
    f = tl.ScalarField.from_function(g, lambda P: P[:, 0] ** 2)
    x_mid = g.axes[0][5] + h / 2
    val = tl.interpolate(f, np.array([x_mid, 0.0]))
    assert abs(val - x_mid ** 2) <= h ** 2 / 4 + 1e-15


def test_interpolation_at_origin_is_nodal():
    g = tl.build_grid(2, 33)
    f = tl.ScalarField.from_function(g, lambda P: np.cos(P[:, 0]) + P[:, 1])
    assert tl.interpolate(f, np.zeros(2)) == f.values[16, 0]


def test_interpolation_rejects_outside_points():
    g = tl.build_grid(2, 17)
    f = tl.ScalarField.from_function(g, lambda P: P[:, 0])
    with pytest.raises(DomainError):
        tl.interpolate(f, np.array([0.0, -0.2]))
    with pytest.raises(DomainError):
        tl.interpolate(f, np.array([1.4, 0.2]))


@pytest.mark.parametrize("dim,rho,measure", [
    (2, 0.5, np.pi * 0.5),
    (2, 1.0, np.pi),
    (3, 1.0, 2 * np.pi),
    (3, 0.3, 2 * np.pi * 0.09),
])
def test_hemisphere_measure(dim, rho, measure):
    q = tl.hemisphere_quadrature(dim, rho, 64)
    assert abs(q.measure - measure) <= 1e-10 * max(1.0, measure)
    assert np.all(q.weights > 0)
    r = np.linalg.norm(q.nodes, axis=1)
    assert np.abs(r - rho).max() < 1e-12
    assert q.nodes[:, -1].min() >= -1e-15


def test_hemisphere_x1sq_closed_form():
    q = tl.hemisphere_quadrature(2, 1.0, 64)
    assert abs(q.integrate(lambda P: P[:, 0] ** 2) - np.pi / 2) < 1e-12


@pytest.mark.parametrize("dim", [2, 3])
def test_hemisphere_degree2_exactness(dim):
    rho = 0.8
    q = tl.hemisphere_quadrature(dim, rho, 64)
    alphas = ([(a, b) for a in range(3) for b in range(3) if a + b <= 2] if dim == 2
              else [(a, b, c) for a in range(3) for b in range(3) for c in range(3)
                    if a + b + c <= 2])
    for alpha in alphas:
        exact = hemisphere_moment_sympy(dim, alpha, rho)
        got = q.integrate(lambda P: np.prod(P ** np.array(alpha), axis=1))
        assert abs(got - exact) <= 1e-8, (alpha, got, exact)


def test_hemisphere_refinement_convergence():
    # smooth integrand with a pole just outside the arc, so the errors at
    # the tested counts sit far above the floating-point floor
    f = lambda P: 1.0 / (0.7 * 1.005 - P[:, 1])
    ref = tl.hemisphere_quadrature(2, 0.7, 1024).integrate(f)
    errs = [abs(tl.hemisphere_quadrature(2, 0.7, n).integrate(f) - ref)
            for n in (16, 32, 64)]
    for a, b in zip(errs, errs[1:]):
        if a < 1e-13:     # already at the floating-point floor
            break
        assert a / max(b, 1e-17) >= 3.0


@pytest.mark.parametrize("dim,rho,vol", [
    (2, 1.0, np.pi / 2),
    (3, 0.5, np.pi / 12),
])
def test_halfball_volume(dim, rho, vol):
    q = tl.halfball_quadrature(dim, rho)
    assert abs(q.measure - vol) <= 1e-6
    assert np.all(q.weights > 0)
    assert np.linalg.norm(q.nodes, axis=1).max() <= rho + 1e-12


def test_halfball_x1sq():
    q = tl.halfball_quadrature(2, 1.0)
    assert abs(q.integrate(lambda P: P[:, 0] ** 2) - np.pi / 8) <= 1e-5


def test_disk_rules():
    q = tl.disk_quadrature(2, 0.3)
    assert abs(q.measure - 0.6) < 1e-12
    q = tl.disk_quadrature(3, 1.0)
    assert abs(q.measure - np.pi) <= 1e-8
    q = tl.disk_quadrature(2, 1.0)
    assert abs(q.integrate(lambda P: np.maximum(P[:, 0], 0.0)) - 0.5) < 1e-12


def test_disk_boundary_rule():
    q2 = tl.geometry.disk_boundary_quadrature(2, 0.4)
    assert q2.nodes.shape == (2, 2) and np.allclose(np.abs(q2.nodes[:, 0]), 0.4)
    q3 = tl.geometry.disk_boundary_quadrature(3, 0.4)
    assert abs(q3.measure - 2 * np.pi * 0.4) < 1e-12


def test_quadrature_rejects_large_radius():
    with pytest.raises(DomainError):
        tl.hemisphere_quadrature(2, 1.2, 64)
    with pytest.raises(DomainError):
        tl.halfball_quadrature(2, 1.5)


def test_gradient_exact_on_quadratics():
    g = tl.build_grid(2, 33)
    f = tl.ScalarField.from_function(g, lambda P: P[:, 0] ** 2 - P[:, 1] ** 2)
    rng = np.random.default_rng(5)
    pts = rng.uniform(0, 1, size=(50, 2)) * [1.8, 0.9] - [0.9, 0]
    grad = f.gradient(pts)
    expect = np.stack([2 * pts[:, 0], -2 * pts[:, 1]], axis=1)
    assert np.abs(grad - expect).max() < 1e-12


def test_gradient_second_order_near_slab():
    errs = []
    for m in (33, 65):
        g = tl.build_grid(2, m)
        f = tl.ScalarField.from_function(g, lambda P: P[:, 0] ** 3 * P[:, 1]
                                         + np.sin(P[:, 1]))
        pts = np.array([[0.3, 0.01], [0.5, 0.0], [-0.2, 0.02]])
        expect = np.stack([3 * pts[:, 0] ** 2 * pts[:, 1],
                           pts[:, 0] ** 3 + np.cos(pts[:, 1])], axis=1)
        errs.append(np.abs(f.gradient(pts) - expect).max())
    assert errs[1] <= errs[0] / 3.0
