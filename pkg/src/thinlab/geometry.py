"""Half-domain discretization, interpolation, and quadrature.

The computational domain is the half-cube [-1,1]^(n-1) x [0,1] for n in
{2, 3}, discretized by a tensor grid with an odd node count per lateral
axis so that a node sits exactly at the origin and the slab {x_n = 0} is a
grid hyperplane.  Radius-indexed integrals (hemispheres (dB_rho)^+,
half-balls B_rho^+, thin disks B'_rho) are restricted to rho <= 0.9 by the
callers so quadrature nodes never leave the grid.

Quadrature choices:

* hemisphere: n=2 Gauss-Legendre in the angle on [0, pi]; n=3 product of
  Gauss-Legendre in t = x_n/rho (the cosine of the polar angle, exact for
  polynomial integrands) and a uniform azimuth rule (trapezoid on the full
  period, exact for trigonometric polynomials).
* half-ball: radial composite Simpson over layered hemispheres (coarea).
* disk: n=2 composite Gauss-Legendre on the segment [-rho, rho] split at 0
  (penalty integrands kink there); n=3 Gauss-Legendre radius x uniform
  azimuth.

Interpolation is multilinear; point derivatives of grid fields come from
4th-order five-point nodal differences along each axis (stencils shifted
at faces, Fornberg weights) interpolated multilinearly between nodes.
Differencing the interpolant itself at step h/2 is exact-cancelling deep
inside the grid but loses an order wherever the stencil turns one-sided
near the slab, so the nodal route is used everywhere; it is uniformly
second-order accurate in h for smooth fields.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SpecError

__all__ = [
    "Grid",
    "QuadratureRule",
    "build_grid",
    "interpolate",
    "gradient",
    "hemisphere_quadrature",
    "halfball_quadrature",
    "disk_quadrature",
    "disk_boundary_quadrature",
    "fornberg_weights",
    "RHO_MAX",
]

RHO_MAX = 0.9


@functools.lru_cache(maxsize=64)
def _leggauss(n: int):
    return np.polynomial.legendre.leggauss(n)


@dataclass(frozen=True)
class Grid:
    """Tensor grid on [-1,1]^(n-1) x [0,1] with spacing h = 2/(m-1)."""

    dim: int
    cells_per_axis: int

    @property
    def spacing(self) -> float:
        return 2.0 / (self.cells_per_axis - 1)

    @property
    def shape(self) -> tuple:
        m = self.cells_per_axis
        return (m,) * (self.dim - 1) + ((m + 1) // 2,)

    @property
    def axes(self) -> tuple:
        m = self.cells_per_axis
        lateral = np.linspace(-1.0, 1.0, m)
        vertical = np.linspace(0.0, 1.0, (m + 1) // 2)
        return (lateral,) * (self.dim - 1) + (vertical,)

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.shape))

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape (N, dim), row-major in x1..xn order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def lows(self):
        return np.array([-1.0] * (self.dim - 1) + [0.0])

    def highs(self):
        return np.ones(self.dim)

    def slab_multi_index(self):
        """Index tuple selecting the slab plane {x_n = 0} of a nodal array."""
        return (slice(None),) * (self.dim - 1) + (0,)

    def outer_dirichlet_mask(self) -> np.ndarray:
        """Boolean nodal array, True on the lateral faces and the top face."""
        mask = np.zeros(self.shape, dtype=bool)
        for ax in range(self.dim - 1):
            idx = [slice(None)] * self.dim
            idx[ax] = 0
            mask[tuple(idx)] = True
            idx[ax] = -1
            mask[tuple(idx)] = True
        idx = [slice(None)] * self.dim
        idx[self.dim - 1] = -1
        mask[tuple(idx)] = True
        return mask


def build_grid(dim: int, cells_per_axis: int) -> Grid:
    """Construct the half-cube grid; cells_per_axis must be odd and >= 9."""
    if dim not in (2, 3):
        raise SpecError(f"dim must be 2 or 3, got {dim}")
    if cells_per_axis % 2 == 0:
        raise SpecError("cells_per_axis must be odd (a node must sit at the origin)")
    if cells_per_axis < 9:
        raise SpecError("cells_per_axis must be at least 9")
    return Grid(dim=dim, cells_per_axis=cells_per_axis)


# ---------------------------------------------------------------------------
# interpolation


def _check_inside(grid: Grid, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    lo, hi = grid.lows(), grid.highs()
    if points.ndim != 2 or points.shape[1] != grid.dim:
        raise DomainError(f"points must have shape (N, {grid.dim})")
    below = points < lo - tol
    above = points > hi + tol
    if below.any() or above.any():
        bad = np.argwhere(below | above)[0, 0]
        raise DomainError(f"point {points[bad]} lies outside the closed half-domain")
    return np.clip(points, lo, hi)


def interpolate(field, points) -> np.ndarray:
    """Multilinear interpolation of a nodal field at arbitrary points.

    ``field`` needs ``grid`` and ``values`` attributes.  Exact on fields
    whose nodal values come from a multilinear function.  Points outside
    the closed half-domain raise :class:`DomainError`.
    """
    grid = field.grid
    values = field.values
    points = np.asarray(points, dtype=float)
    single = points.ndim == 1
    if single:
        points = points[None, :]
    points = _check_inside(grid, points)

    n = grid.dim
    axes = grid.axes
    idx = []
    frac = []
    for ax in range(n):
        nodes = axes[ax]
        h = nodes[1] - nodes[0]
        i = np.floor((points[:, ax] - nodes[0]) / h).astype(int)
        i = np.clip(i, 0, len(nodes) - 2)
        idx.append(i)
        frac.append((points[:, ax] - nodes[i]) / h)

    out = np.zeros(points.shape[0])
    for corner in range(2 ** n):
        weight = np.ones(points.shape[0])
        gather = []
        for ax in range(n):
            bit = (corner >> ax) & 1
            gather.append(idx[ax] + bit)
            weight = weight * (frac[ax] if bit else 1.0 - frac[ax])
        out += weight * values[tuple(gather)]
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# finite-difference stencils


def fornberg_weights(z: float, xs: np.ndarray, order: int) -> np.ndarray:
    """Finite-difference weights at node positions xs for d^order/dx^order at z."""
    xs = np.asarray(xs, dtype=float)
    n = len(xs)
    c = np.zeros((n, order + 1))
    c1 = 1.0
    c4 = xs[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, order)
        c2 = 1.0
        c5 = c4
        c4 = xs[i] - z
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


def _derivative_operator(n_nodes: int, h: float) -> np.ndarray:
    """Dense 1-D 4th-order first-derivative operator with shifted end stencils."""
    D = np.zeros((n_nodes, n_nodes))
    stencil = np.arange(-2, 3)
    for j in range(n_nodes):
        offs = stencil + max(0, 2 - j) + min(0, n_nodes - 3 - j)
        D[j, j + offs] = fornberg_weights(0.0, offs * h, 1)
    return D


def nodal_derivative(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    """4th-order FD derivative of a nodal array along one axis."""
    n_nodes = values.shape[axis]
    if n_nodes < 5:
        raise SpecError("need at least 5 nodes per axis for 4th-order stencils")
    D = _derivative_operator(n_nodes, h)
    moved = np.moveaxis(values, axis, 0)
    out = np.tensordot(D, moved, axes=(1, 0))
    return np.moveaxis(out, 0, axis)


def gradient(field, points) -> np.ndarray:
    """Gradient of a grid field at arbitrary points, shape (N, dim).

    Nodal 4th-order differences per axis (shifted at faces), interpolated
    multilinearly.  Uniformly O(h^2) for smooth fields, slab included.
    """
    grid = field.grid
    points = np.asarray(points, dtype=float)
    single = points.ndim == 1
    if single:
        points = points[None, :]
    points = _check_inside(grid, points)

    cache = getattr(field, "_nodal_gradients", None)
    if cache is None:
        h = grid.spacing
        cache = [nodal_derivative(field.values, ax, h) for ax in range(grid.dim)]
        try:
            object.__setattr__(field, "_nodal_gradients", cache)
        except (AttributeError, TypeError):
            pass

    out = np.zeros_like(points)
    holder = _FieldView(grid, None)
    for ax in range(grid.dim):
        holder.values = cache[ax]
        out[:, ax] = interpolate(holder, points)
    return out[0] if single else out


class _FieldView:
    """Minimal grid+values holder for interpolation of derived arrays."""

    __slots__ = ("grid", "values")

    def __init__(self, grid, values):
        self.grid = grid
        self.values = values


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and positive weights for one radius-indexed target set."""

    nodes: np.ndarray
    weights: np.ndarray
    target: str

    @property
    def measure(self) -> float:
        return float(self.weights.sum())

    def integrate(self, f) -> float:
        """Sum w_i f(node_i); f is a callable on (N, dim) or a value array."""
        vals = f(self.nodes) if callable(f) else np.asarray(f, dtype=float)
        return float(np.dot(self.weights, vals))


def _check_rho(rho: float):
    if not 0.0 < rho <= 1.0:
        raise DomainError(f"radius {rho} outside (0, 1]")


@functools.lru_cache(maxsize=512)
def hemisphere_quadrature(dim: int, rho: float, angular_count: int = 64) -> QuadratureRule:
    """Rule for the open hemisphere (dB_rho)^+ = dB_rho(0) cap {x_n > 0}."""
    _check_rho(rho)
    if angular_count < 16:
        raise SpecError("angular_count must be at least 16")
    if dim == 2:
        t, w = _leggauss(int(angular_count))
        theta = 0.5 * np.pi * (t + 1.0)
        weights = 0.5 * np.pi * w * rho
        nodes = np.stack([rho * np.cos(theta), rho * np.sin(theta)], axis=1)
        return QuadratureRule(nodes, weights, f"hemisphere({rho})")
    if dim == 3:
        n_pol = max(8, int(angular_count) // 2)
        n_az = int(angular_count)
        t, wt = _leggauss(n_pol)
        t = 0.5 * (t + 1.0)          # t = x_n / rho in (0, 1)
        wt = 0.5 * wt
        phi = 2.0 * np.pi * np.arange(n_az) / n_az
        waz = 2.0 * np.pi / n_az
        T, P = np.meshgrid(t, phi, indexing="ij")
        lateral = rho * np.sqrt(np.maximum(1.0 - T ** 2, 0.0))
        nodes = np.stack(
            [lateral * np.cos(P), lateral * np.sin(P), rho * T], axis=-1
        ).reshape(-1, 3)
        weights = (rho ** 2 * np.outer(wt, np.full(n_az, waz))).ravel()
        return QuadratureRule(nodes, weights, f"hemisphere({rho})")
    raise SpecError(f"dim must be 2 or 3, got {dim}")


@functools.lru_cache(maxsize=512)
def halfball_quadrature(
    dim: int,
    rho: float,
    spacing: float | None = None,
    angular_count: int | None = None,
    radial_count: int | None = None,
) -> QuadratureRule:
    """Rule for the half-ball B_rho^+, layered hemispheres with Simpson radii."""
    _check_rho(rho)
    if angular_count is None:
        angular_count = 64 if spacing is None else max(64, int(np.ceil(4 * rho / spacing)))
    if radial_count is None:
        radial_count = 32 if spacing is None else max(32, int(np.ceil(2 * rho / spacing)))
    n_r = int(radial_count)
    if n_r % 2 == 1:
        n_r += 1
    radii = np.linspace(0.0, rho, n_r + 1)
    simpson = np.ones(n_r + 1)
    simpson[1:-1:2] = 4.0
    simpson[2:-1:2] = 2.0
    simpson *= (rho / n_r) / 3.0

    all_nodes = []
    all_weights = []
    for r, wr in zip(radii[1:], simpson[1:]):   # r = 0 layer has zero measure
        layer = hemisphere_quadrature(dim, r, angular_count)
        all_nodes.append(layer.nodes)
        all_weights.append(wr * layer.weights)
    nodes = np.concatenate(all_nodes, axis=0)
    weights = np.concatenate(all_weights)
    return QuadratureRule(nodes, weights, f"halfball({rho})")


@functools.lru_cache(maxsize=512)
def disk_quadrature(
    dim: int,
    rho: float,
    spacing: float | None = None,
    count: int | None = None,
) -> QuadratureRule:
    """Rule for the thin set B'_rho: segment [-rho, rho] (n=2) or disk (n=3)."""
    _check_rho(rho)
    if dim == 2:
        n_panels = count if count is not None else (
            16 if spacing is None else max(16, int(np.ceil(2 * rho / spacing))))
        if n_panels % 2 == 1:
            n_panels += 1
        edges = np.linspace(-rho, rho, n_panels + 1)
        t, w = _leggauss(4)
        xs, ws = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            xs.append(0.5 * (b - a) * t + 0.5 * (a + b))
            ws.append(0.5 * (b - a) * w)
        x1 = np.concatenate(xs)
        weights = np.concatenate(ws)
        nodes = np.stack([x1, np.zeros_like(x1)], axis=1)
        return QuadratureRule(nodes, weights, f"disk({rho})")
    if dim == 3:
        n_rad = count if count is not None else (
            32 if spacing is None else max(32, int(np.ceil(2 * rho / spacing))))
        n_az = 2 * n_rad
        t, wt = _leggauss(int(n_rad))
        r = 0.5 * rho * (t + 1.0)
        wr = 0.5 * rho * wt * r          # polar Jacobian r dr
        phi = 2.0 * np.pi * np.arange(n_az) / n_az
        waz = 2.0 * np.pi / n_az
        R, P = np.meshgrid(r, phi, indexing="ij")
        nodes = np.stack(
            [R * np.cos(P), R * np.sin(P), np.zeros_like(R)], axis=-1
        ).reshape(-1, 3)
        weights = np.outer(wr, np.full(n_az, waz)).ravel()
        return QuadratureRule(nodes, weights, f"disk({rho})")
    raise SpecError(f"dim must be 2 or 3, got {dim}")


@functools.lru_cache(maxsize=512)
def disk_boundary_quadrature(dim: int, rho: float, count: int = 64) -> QuadratureRule:
    """Rule for the relative boundary of B'_rho inside the slab."""
    _check_rho(rho)
    if dim == 2:
        nodes = np.array([[-rho, 0.0], [rho, 0.0]])
        weights = np.array([1.0, 1.0])
        return QuadratureRule(nodes, weights, f"disk_boundary({rho})")
    if dim == 3:
        phi = 2.0 * np.pi * np.arange(count) / count
        nodes = np.stack(
            [rho * np.cos(phi), rho * np.sin(phi), np.zeros_like(phi)], axis=1
        )
        weights = np.full(count, 2.0 * np.pi * rho / count)
        return QuadratureRule(nodes, weights, f"disk_boundary({rho})")
    raise SpecError(f"dim must be 2 or 3, got {dim}")
