#!/usr/bin/env python3
"""Band-restricted gradient integral for a linear ramp (closed form).

res(n; f) = (1/n) * int_{n < f < 2n} |D_v f|^2.
For f(x,v) = c (v + Lv) on [-Lv, Lv] (independent of x), the band
n < f < 2n is v in (n/c - Lv, 2n/c - Lv) with length n/c, so
res = (1/n) c^2 (n/c) = c for every n with 2n < 2 c Lv.

Discrete check on the cell-centered grid the C++ test uses (band decided by
cell values, gradient by centered differences): quantization error O(h).
"""
import numpy as np

def main():
    Lx, Lv, nx, nv = np.pi, 4.0, 8, 256
    hx, hv = 2*Lx/nx, 2*Lv/nv
    v = -Lv + (np.arange(nv) + 0.5)*hv
    c = 3.0
    f = np.tile(c*(v + Lv), (nx, 1))
    g = np.gradient(f, hv, axis=1)      # centered interior, one-sided ends
    for n in (2.0, 4.0, 8.0):
        band = (f > n) & (f < 2*n)
        res = np.sum(g[band]**2)*hx*hv/n / (2*Lx)   # per unit x-measure: c^2 * (n/c) / n = c
        print(f"n={n}: res/(2Lx-normalized) = {res:.6f} (exact {c})")
        assert abs(res - c) < 0.15
    # zero once n exceeds max f
    n = c*2*Lv + 1
    band = (f > n) & (f < 2*n)
    assert not band.any()
    print("res = 0 for n > max f: OK")

if __name__ == '__main__':
    main()
    print("renorm oracle OK")
