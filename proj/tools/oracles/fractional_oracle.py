#!/usr/bin/env python3
"""Spectral fractional seminorm: single-mode exactness and the interpolation
ratio window for the random-field property test.

x-axis seminorm on [-Lx, Lx) periodic: frequencies k_n = pi n / Lx,
[f]_{s,x}^2 = sum_cells_weights * 2 Lx * sum_n |k_n|^(2s) |c_n|^2 with
c_n the normalized DFT. A pure mode sin(k_1 x) gives [f] = k_1^s ||f||_2.

t-axis: even reflection to length 2 n_t, frequencies w_m = pi m / T,
[y]_{s,t}^2 = T * sum_m |w_m|^(2s) |c_m|^2. A mode cos(pi q t / T) gives
[y] = (pi q / T)^s ||y||_2 exactly (the reflected signal is a circle mode).

Interpolation test (d=1, s=1/3, theta=1/2 => p=3):
rho(f) = ||f||_3 / ( ||f||_2^(1/2) * (||f||_2 + [f]_{1/3,x})^(1/2) )
measured over the same low-mode random family the C++ test generates; the
frozen window below must contain the C++ ratios with margin.
"""
import numpy as np

Lx, Lv, n = np.pi, 4.0, 64
hx, hv = 2*Lx/n, 2*Lv/n
x = -Lx + (np.arange(n) + 0.5)*hx
v = -Lv + (np.arange(n) + 0.5)*hv
X, V = np.meshgrid(x, v, indexing='ij')
dA = hx*hv

def frac_x(f, s):
    c = np.fft.fft(f, axis=0)/n
    kn = np.fft.fftfreq(n, d=1.0/n)          # integer frequencies
    k = np.abs(kn)*np.pi/Lx
    w = (k**(2*s))[:, None]
    return np.sqrt(2*Lx*np.sum(w*np.abs(c)**2)*hv)

def l2(f):
    return np.sqrt(np.sum(f**2)*dA)

def lp(f, p):
    return (np.sum(np.abs(f)**p)*dA)**(1.0/p)

def main():
    s = 1.0/3.0
    # single x mode
    f1 = np.sin(3*np.pi*X/Lx)*np.ones_like(V)
    k1 = 3*np.pi/Lx
    print("x-mode: [f]/||f||_2 =", frac_x(f1, s)/l2(f1), " expected k1^s =", k1**s)
    assert abs(frac_x(f1, s)/l2(f1) - k1**s) < 1e-12

    # t-axis single mode
    T, nt, q = 1.0, 100, 3
    y = np.cos(np.pi*q*np.arange(nt+1)/nt)
    z = np.concatenate([y, y[-2:0:-1]])
    c = np.fft.fft(z)/(2*nt)
    m = np.fft.fftfreq(2*nt, d=1.0/(2*nt))
    w = np.abs(m)*np.pi/T
    semi2 = T*np.sum(w**(2*s)*np.abs(c)**2)
    dt = T/nt
    wt = np.ones(nt+1); wt[0] = wt[-1] = 0.5
    l2t2 = np.sum(wt*y**2)*dt
    print("t-mode: semi/||y||_2 =", np.sqrt(semi2/l2t2), " expected (pi q/T)^s =", (np.pi*q/T)**s)
    assert abs(np.sqrt(semi2/l2t2) - (np.pi*q/T)**s) < 1e-12

    # interpolation ratio window over the random family
    rng = np.random.default_rng(20260815)
    ratios = []
    for _ in range(400):
        f = np.zeros_like(X)
        for kx in range(5):
            for lv_ in range(5):
                a = rng.normal()/(1.0 + kx*kx + lv_*lv_)
                ph = rng.uniform(0, 2*np.pi)
                f += a*np.cos(kx*np.pi*X/Lx + ph)*np.cos(lv_*np.pi*(V+Lv)/(2*Lv))
        r = lp(f, 3)/np.sqrt(l2(f)*(l2(f) + frac_x(f, s)))
        ratios.append(r)
    ratios = np.array(ratios)
    med = np.median(ratios)
    print(f"interpolation ratio: min {ratios.min():.4f} med {med:.4f} max {ratios.max():.4f}")
    print(f"spread around median: [{ratios.min()/med:.3f}, {ratios.max()/med:.3f}]")
    print(f"frozen window for C++ property test: [{0.75*ratios.min():.4f}, {1.25*ratios.max():.4f}]")

if __name__ == '__main__':
    main()
    print("\nfractional oracle OK")
