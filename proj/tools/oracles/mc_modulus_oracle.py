#!/usr/bin/env python3
"""Time modulus of the drift-free kinetic flow, for the particle test bound.

Characteristics: dX = -V dt, dV = sqrt(2) dB, V_0 ~ N(0, sv^2) independent of
X_0. Increments over [s, t], tau = t - s:
  dV = sqrt(2)(B_t - B_s)            ~ N(0, 2 tau)      E|dV| = 2 sqrt(tau/pi)
  dX = -V_s tau - sqrt(2) int (B_u - B_s) du
       Var(dX) = (sv^2 + 2s) tau^2 + (2/3) tau^3        E|dX| = sqrt(2 Var/pi)
Transport modulus d(s,t) <= E|dX| + E|dV|; the test asserts
sup d(s,t)/sqrt(tau) <= 2.0 for the acceptance configuration
(sv = 0.7, T = 0.5). This script evaluates the sup analytically.
"""
import numpy as np

def main():
    sv, T = 0.7, 0.5
    best = 0.0
    for s in np.linspace(0, T, 501)[:-1]:
        for tau in np.linspace(0, T - s, 501)[1:]:
            vdx = (sv**2 + 2*s)*tau**2 + (2.0/3.0)*tau**3
            d = np.sqrt(2*vdx/np.pi) + 2*np.sqrt(tau/np.pi)
            best = max(best, d/np.sqrt(tau))
    print(f"sup over (s, tau) of (E|dX|+E|dV|)/sqrt(tau) = {best:.4f}  (frozen bound 2.0)")
    assert best < 2.0
    print("E|dV| for tau=0.1:", 2*np.sqrt(0.1/np.pi))

if __name__ == '__main__':
    main()
    print("\nmc modulus oracle OK")
