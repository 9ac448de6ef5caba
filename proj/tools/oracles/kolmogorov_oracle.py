#!/usr/bin/env python3
"""Exact fundamental solution of the drift-free kinetic operator.

The solved equation is  dt m - Lap_v m - v . D_x m = 0  (so the transport
carries mass with dX/dt = -v; the x-v covariance of the spreading Gaussian is
negative). Starting from an isotropic Gaussian with spreads (sx, sv) centered
at (x0, v0), the solution stays Gaussian with

    mean_x(t)  = x0 - v0 t
    mean_v(t)  = v0
    Sxx(t) = sx^2 + sv^2 t^2 + (2/3) t^3
    Svv(t) = sv^2 + 2 t
    Sxv(t) = -(sv^2 t + t^2)

This script verifies symbolically that the density solves the PDE, then
freezes point values for the C++ tests.
"""
import sympy as sp

def main():
    t, x, v, sx, sv, x0, v0 = sp.symbols('t x v s_x s_v x0 v0', positive=True, real=True)
    t_ = sp.Symbol('t', positive=True)
    x_, v_ = sp.symbols('x v', real=True)

    Sxx = sx**2 + sv**2*t_**2 + sp.Rational(2, 3)*t_**3
    Svv = sv**2 + 2*t_
    Sxv = -(sv**2*t_ + t_**2)
    det = Sxx*Svv - Sxv**2
    mx = x0 - v0*t_
    mv = v0
    dx = x_ - mx
    dv = v_ - mv
    quad = (Svv*dx**2 - 2*Sxv*dx*dv + Sxx*dv**2) / det
    m = sp.exp(-quad/2) / (2*sp.pi*sp.sqrt(det))

    pde = sp.diff(m, t_) - sp.diff(m, v_, 2) - v_*sp.diff(m, x_)
    pde_simplified = sp.simplify(pde / m)
    print("(dt - Lap_v - v.Dx) m / m  (must be 0):", pde_simplified)
    assert pde_simplified == 0, "Gaussian does not solve the PDE"

    # sanity: the +t^2 covariance Gaussian does NOT solve this equation
    Sxv_bad = (sv**2*t_ + t_**2)
    det_b = Sxx*Svv - Sxv_bad**2
    quad_b = (Svv*dx**2 - 2*Sxv_bad*dx*dv + Sxx*dv**2) / det_b
    mb = sp.exp(-quad_b/2) / (2*sp.pi*sp.sqrt(det_b))
    pde_b = sp.simplify((sp.diff(mb, t_) - sp.diff(mb, v_, 2) - v_*sp.diff(mb, x_)) / mb)
    val = pde_b.subs({t_: sp.Rational(1, 2), x_: sp.Rational(1, 5), v_: sp.Rational(1, 3),
                      sx: sp.Rational(1, 10), sv: sp.Rational(1, 10),
                      x0: 0, v0: 0})
    print("flipped-covariance Gaussian residual at a sample point (nonzero expected):", sp.nsimplify(val, rational=False))
    assert sp.simplify(val) != 0

    # frozen values: (t, x, v, sx, sv, x0, v0) -> density
    samples = [
        (0.25, 0.10, 0.30, 0.1, 0.1, 0.0, 0.0),
        (1.00, -0.40, 0.80, 0.1, 0.1, 0.0, 0.0),
        (0.50, 0.00, 0.00, 0.1, 0.1, 0.0, 0.0),
        (1.00, 0.55, -1.20, 0.4, 0.7, 0.0, 0.0),
        (0.50, -0.30, 0.20, 0.2, 0.3, 0.1, -0.2),
    ]
    print("\nfrozen samples: {t, x, v, sx, sv, x0, v0, density}")
    for (tv, xv, vv, sxv, svv, x0v, v0v) in samples:
        val = m.subs({t_: sp.Rational(tv), x_: sp.Rational(xv), v_: sp.Rational(vv),
                      sx: sp.Rational(sxv), sv: sp.Rational(svv),
                      x0: sp.Rational(x0v), v0: sp.Rational(v0v)})
        print(f"  {{{tv}, {xv}, {vv}, {sxv}, {svv}, {x0v}, {v0v}, {float(val):.16e}}},")

    # moment table for the Monte Carlo check: Var(V_T) = sv^2 + 2T
    print("\nVar(V) at T=0.5 with sv=0.7:", 0.7**2 + 2*0.5)

if __name__ == '__main__':
    main()
    print("\nkolmogorov oracle OK")
