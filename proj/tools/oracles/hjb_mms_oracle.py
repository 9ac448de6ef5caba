#!/usr/bin/env python3
"""Manufactured solution for the backward kinetic HJB convergence test.

u*(t,x,v) = (1 + (T-t)/T) * cos(x) * cos(pi v / Lv)
(2 pi periodic in x when Lx = pi; dv u* = 0 at v = +-Lv, matching the no-flux
walls). The forcing that makes u* solve

    -dt u - Lap_v u + v . Dx u + H(Dv u) = F,  u(T) = u*(T)

is F* = -dt u* - dvv u* + v dx u* + H(dv u*). Evaluated here with sympy for
H(q) = q^2 / (1 + eps |q|), eps = 0.5; two frozen point values guard the
closed-form transcription in the C++ test.
"""
import sympy as sp

def main():
    t, x, v = sp.symbols('t x v', real=True)
    T, Lv, eps = sp.Rational(1), sp.Rational(4), sp.Rational(1, 2)
    u = (1 + (T - t)/T) * sp.cos(x) * sp.cos(sp.pi*v/Lv)
    q = sp.diff(u, v)
    H = q**2 / (1 + eps*sp.sqrt(q**2))
    F = -sp.diff(u, t) - sp.diff(u, v, 2) + v*sp.diff(u, x) + H

    print("dt u* :", sp.simplify(sp.diff(u, t)))
    print("dvv u*:", sp.simplify(sp.diff(u, v, 2)))
    print("dx u* :", sp.simplify(sp.diff(u, x)))
    print("dv u* :", sp.simplify(q))

    pts = [(sp.Rational(3, 10), sp.Rational(7, 10), sp.Rational(-11, 10)),
           (sp.Rational(8, 10), sp.Rational(-12, 10), sp.Rational(25, 10))]
    for (tv, xv, vv) in pts:
        fv = F.subs({t: tv, x: xv, v: vv})
        uv = u.subs({t: tv, x: xv, v: vv})
        print(f"t={float(tv)}, x={float(xv)}, v={float(vv)}:  F* = {float(fv):.16e}   u* = {float(uv):.16e}")

if __name__ == '__main__':
    main()
    print("\nhjb mms oracle OK")
