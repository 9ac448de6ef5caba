#!/usr/bin/env python3
"""Independent derivation of the regularized Hamiltonian and its gradient.

H_eps(p) = H(p) / (1 + eps * sqrt(H(p))) for a base Hamiltonian H >= 0.
Derives the exact gradient with sympy, checks the structural inequalities on
dense grids, and freezes sample values for the C++ unit tests.
"""
import sympy as sp
import numpy as np

def derive(eps_val=None):
    px, py, eps = sp.symbols('px py eps', real=True)
    p = sp.Matrix([px, py])

    # base H = |p|^2
    H = px**2 + py**2
    Heps = H / (1 + eps * sp.sqrt(H))
    grad = sp.Matrix([sp.diff(Heps, px), sp.diff(Heps, py)])

    # closed-form candidate: H_p * (1 + (eps/2) sqrt(H)) / (1 + eps sqrt(H))^2
    Hp = sp.Matrix([2*px, 2*py])
    cand = Hp * (1 + (eps/2)*sp.sqrt(H)) / (1 + eps*sp.sqrt(H))**2

    diff = sp.simplify(grad - cand)
    print("grad(H^eps) - closed_form (must be zero):", diff.T)
    assert diff == sp.zeros(2, 1), "closed form mismatch"

    # typo'd variant from the flawed display: factor (1 + eps/2 * H)
    typo = Hp * (1 + (eps/2)*H) / (1 + eps*sp.sqrt(H))**2
    d2 = sp.simplify(grad - typo)
    print("grad(H^eps) - typo_form (nonzero expected):", sp.simplify(d2[0].subs({px: 3, py: 0, eps: 1})))

    # excess = H_p^eps . p - H^eps ; exact identity excess = H^eps / (1 + eps sqrt(H))
    excess = sp.simplify(cand.dot(p) - Heps)
    ident = sp.simplify(excess - Heps/(1 + eps*sp.sqrt(H)))
    print("excess - H^eps/(1+eps sqrt(H)) (must be zero):", ident)
    assert ident == 0

    # |H_p^eps|^2 <= 4 * excess  and  <= 4 * H^eps : ratios in terms of a = eps|p|
    a = sp.symbols('a', nonnegative=True)
    r = sp.symbols('r', positive=True)
    # with r=|p|: H^eps = r^2/(1+a), |Hp^eps| = r(2+a)/(1+a)^2, excess = r^2/(1+a)^2
    ratio_excess = sp.simplify((r*(2+a)/(1+a)**2)**2 / (r**2/(1+a)**2))
    print("|Hp^eps|^2/excess =", ratio_excess, " max at a=0 ->", ratio_excess.subs(a, 0))
    ratio_heps = sp.simplify((r*(2+a)/(1+a)**2)**2 / (r**2/(1+a)))
    print("|Hp^eps|^2/H^eps =", ratio_heps, " at a=0 ->", ratio_heps.subs(a, 0))
    # both ratios are <= 4 and decreasing in a
    for av in np.linspace(0, 50, 501):
        assert (2+av)**2/(1+av)**2 <= 4.0 + 1e-15
        assert (2+av)**2/(1+av)**3 <= 4.0 + 1e-15

    # excess vs H^eps: excess/H^eps = 1/(1+a) < 1 for a>0 (criterion blocker)
    print("excess/H^eps = 1/(1+a)  -> strictly < 1 for p != 0")

    # Lipschitz bound |Hp^eps| <= C/eps: |Hp^eps| = r(2+a)/(1+a)^2 with a=eps r
    # = (1/eps) a(2+a)/(1+a)^2 <= 2/eps  (sup of a(2+a)/(1+a)^2 is 1 at a->inf,
    # max of the prefactor function g(a)=a(2+a)/(1+a)^2 on [0,inf) is 1)
    g = a*(2+a)/(1+a)**2
    gv = [float(g.subs(a, x)) for x in np.linspace(0, 1000, 2001)]
    print("sup a(2+a)/(1+a)^2 over [0,1000]:", max(gv), "(-> 1, so |Hp^eps| <= 1/eps)")

    # frozen sample values for C++ tests (eps, px, py)
    samples = [(1.0, 1.0, 0.0), (1.0, 5.0, 0.0), (0.5, 1.5, -2.0),
               (0.1, 3.0, 4.0), (0.25, -0.3, 0.7)]
    print("\nfrozen samples: eps px py -> Heps, Hpx, Hpy, excess")
    for e, x, y in samples:
        sub = {eps: e, px: x, py: y}
        hv = float(Heps.subs(sub))
        gx = float(cand[0].subs(sub))
        gy = float(cand[1].subs(sub))
        ex = float(excess.subs(sub))
        print(f"  {{{e}, {x}, {y}, {hv:.16e}, {gx:.16e}, {gy:.16e}, {ex:.16e}}},")

    # also freeze one sample for the Lipschitz base sqrt(1+|p|^2)-1 (unregularized)
    Hs = sp.sqrt(1 + px**2 + py**2) - 1
    gs = sp.Matrix([sp.diff(Hs, px), sp.diff(Hs, py)])
    sub = {px: 0.6, py: -1.1}
    print("\nsoft-norm sample p=(0.6,-1.1): H =", float(Hs.subs(sub)),
          " grad =", float(gs[0].subs(sub)), float(gs[1].subs(sub)))

    # dense-grid numeric certification (what the acceptance binary repeats in C++)
    for e in (1.0, 0.5, 0.1):
        xs = np.linspace(-5, 5, 201)
        X, Y = np.meshgrid(xs, xs, indexing='ij')
        R = np.hypot(X, Y)
        A = e * R
        Hb = R**2
        He = Hb / (1 + A)
        Hpx = X * (2 + A) / (1 + A)**2
        Hpy = Y * (2 + A) / (1 + A)**2
        Hpn2 = Hpx**2 + Hpy**2
        exc = He / (1 + A)
        assert np.all(He <= Hb + 1e-14), "H^eps <= H violated"
        assert np.all(Hpn2 <= 4*exc + 1e-12), "|Hp|^2 <= 4*excess violated"
        assert np.all(Hpn2 <= 4*He + 1e-12), "|Hp|^2 <= 4*H^eps violated"
        assert np.all(np.sqrt(Hpn2) <= 2.0/e + 1e-12), "|Hp| <= 2/eps violated"
        mask = R > 0
        frac_fail = np.mean(exc[mask] < He[mask])   # excess >= H^eps fails everywhere off origin
        print(f"eps={e}: fraction of off-origin points with excess < H^eps: {frac_fail:.3f}")

if __name__ == '__main__':
    derive()
    print("\nhepsilon oracle OK")
