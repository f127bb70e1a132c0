"""Independent oracles used to freeze expected values.

Each oracle is deliberately implemented on a different path than the code
it checks: coordinate descent instead of Newton, sympy symbolic calculus
instead of the layer recurrence, cmath instead of the real-pair branch
arithmetic, and a refinement doubling instead of the production counts.
"""

import numpy as np
import scipy.optimize


def coordinate_descent(energy, initial_values, tol=1e-12, max_sweeps=5000,
                       linear_slab_load=None):
    """Gauss-Seidel sweep with exact 1-D convex minimization per node.

    For p = 2 each nodal problem is piecewise quadratic and solved in
    closed form over its three branches; otherwise the monotone derivative
    is bracketed and solved with brentq.  An optional linear slab load
    models quadratic energies with a boundary term.
    """
    K = energy.K.tocsr()
    x = np.asarray(initial_values, dtype=float).ravel().copy()
    x[energy.dirichlet_flat] = energy.g_dirichlet
    free = energy.free_flat
    p = energy.spec.p

    slab_of = {int(n): i for i, n in enumerate(energy.slab_flat)}
    load = np.zeros(len(energy.slab_flat))
    if linear_slab_load is not None:
        load = np.asarray(linear_slab_load, dtype=float)

    diag = K.diagonal()
    for _ in range(max_sweeps):
        biggest = 0.0
        for node in free:
            row = K.getrow(node)
            c = row @ x - diag[node] * x[node]
            c = float(c[0] if hasattr(c, "__len__") else c)
            a = diag[node]
            si = slab_of.get(int(node))
            if si is None:
                s_new = -c / a
            else:
                w = energy.omega[si]
                kp, km, hv = energy.kp[si], energy.km[si], energy.h_slab[si]
                lin = load[si]
                if p == 2.0:
                    cand = []
                    s_plus = (w * kp * hv - c - w * lin) / (a + w * kp)
                    if s_plus >= hv:
                        cand.append(s_plus)
                    s_minus = (w * km * hv - c - w * lin) / (a + w * km)
                    if s_minus <= hv:
                        cand.append(s_minus)
                    cand.append(hv)

                    def val(s):
                        pos, neg = max(s - hv, 0.0), max(hv - s, 0.0)
                        return (0.5 * a * s * s + c * s + w * lin * s
                                + 0.5 * w * (kp * pos ** 2 + km * neg ** 2))

                    s_new = min(cand, key=val)
                else:
                    def dphi(s):
                        pos, neg = max(s - hv, 0.0), max(hv - s, 0.0)
                        return (a * s + c + w * lin
                                + w * (kp * pos ** (p - 1) - km * neg ** (p - 1)))

                    lo, hi = -1.0, 1.0
                    while dphi(lo) > 0:
                        lo *= 2.0
                    while dphi(hi) < 0:
                        hi *= 2.0
                    s_new = scipy.optimize.brentq(dphi, lo, hi, xtol=1e-14)
            biggest = max(biggest, abs(s_new - x[node]))
            x[node] = s_new
        if biggest < tol:
            break
    return x


def hemisphere_moment_sympy(dim, alpha, rho=1.0):
    """Exact hemisphere integral of x^alpha via symbolic integration."""
    import sympy as sp

    r, th, ph, t = sp.symbols("r theta phi t", positive=True)
    if dim == 2:
        theta = sp.Symbol("theta")
        x1 = rho * sp.cos(theta)
        xn = rho * sp.sin(theta)
        integrand = x1 ** alpha[0] * xn ** alpha[1] * rho
        return float(sp.integrate(integrand, (theta, 0, sp.pi)))
    tt = sp.Symbol("t")      # t = xn / rho
    phi = sp.Symbol("phi")
    lat = rho * sp.sqrt(1 - tt ** 2)
    x1 = lat * sp.cos(phi)
    x2 = lat * sp.sin(phi)
    xn = rho * tt
    integrand = x1 ** alpha[0] * x2 ** alpha[1] * xn ** alpha[2] * rho ** 2
    return float(sp.integrate(sp.integrate(integrand, (phi, 0, 2 * sp.pi)), (tt, 0, 1)))


def extension_defect_sympy(entries_src, h_src, h_bar, kappa):
    """Symbolic check that h_bar satisfies the defining extension properties.

    Returns (max |low-order coefficient| of D_i(a^{ij} D_j h_bar),
    max |trace - Taylor(h)| coefficient, first-layer norm): all three must
    vanish for a valid extension.
    """
    import sympy as sp

    n = len(entries_src)
    xs = sp.symbols(f"x1:{n + 1}")
    a = [[sp.sympify(entries_src[i][j].replace("**", "^")).subs({}) if False
          else sp.sympify(entries_src[i][j]) for j in range(n)] for i in range(n)]
    a = [[e.subs({sp.Symbol(f"x{k + 1}"): xs[k] for k in range(n)}) for e in row]
         for row in a]
    hb = sp.S(0)
    for alpha, c in h_bar.coefficients.items():
        term = sp.Float(c, 30)
        for ax, e in enumerate(alpha):
            term *= xs[ax] ** e
        hb += term
    L = sp.S(0)
    for i in range(n):
        for j in range(n):
            L += sp.diff(a[i][j] * sp.diff(hb, xs[j]), xs[i])
    L = sp.expand(L)
    poly = sp.Poly(L, *xs) if L != 0 else None
    low = 0.0
    if poly is not None:
        for mono, coeff in zip(poly.monoms(), poly.coeffs()):
            if sum(mono) <= kappa - 2:
                low = max(low, abs(float(coeff)))

    hsym = sp.sympify(h_src)
    hsym = hsym.subs({sp.Symbol(f"x{k + 1}"): xs[k] for k in range(n - 1)})
    taylor = sp.S(0)
    import itertools
    for alpha in itertools.product(range(kappa + 1), repeat=n - 1):
        if sum(alpha) > kappa:
            continue
        d = hsym
        fact = 1
        for ax, e in enumerate(alpha):
            d = sp.diff(d, xs[ax], e)
            fact *= sp.factorial(e)
        val = d.subs({xs[k]: 0 for k in range(n - 1)})
        term = val / fact
        for ax, e in enumerate(alpha):
            term *= xs[ax] ** e
        taylor += term
    trace = hb.subs(xs[n - 1], 0)
    diff = sp.expand(trace - taylor)
    trace_defect = 0.0
    if diff != 0:
        poly = sp.Poly(diff, *xs[: n - 1])
        trace_defect = max(abs(float(c)) for c in poly.coeffs())

    layer1 = sp.expand(sp.diff(hb, xs[n - 1]).subs(xs[n - 1], 0))
    layer1_norm = 0.0
    if layer1 != 0:
        poly = sp.Poly(layer1, *xs[: n - 1])
        layer1_norm = max(abs(float(c)) for c in poly.coeffs())
    return low, trace_defect, layer1_norm


def log_solution_cmath(p, kappa_plus, x1, xn):
    """w via the standard library's complex arithmetic (independent branch)."""
    import cmath

    z = complex(xn, x1)
    if z == 0:
        return 0.0
    inner = cmath.log(z) / (cmath.pi * p) - 1.0 / (cmath.pi * p * p) + 1j / (2.0 * p)
    return ((-1j) ** p * kappa_plus * z ** p * inner).real
