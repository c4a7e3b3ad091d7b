"""
The bifurcation measure on a quadratic slice
============================================

The Lyapunov function c -> L(z^2 + c) is subharmonic; its Laplacian is the
bifurcation measure, supported on the boundary of the Mandelbrot set.  We
sample L on a coarse grid, take the discrete Laplacian and look at where
the mass sits.
"""

import numpy as np

from ratdyn.parameter import bifurcation_density, lyapunov_slice, make_family, render, window_stats

quad = make_family("quadratic")
window = (-2.5, 1.0, -1.5, 1.5)
s = lyapunov_slice(quad, window, 96, depth=30, count=1000, seed=1)
d = bifurcation_density(s)
print(f"total mass {d.totalMass:.3f}, noise floor {d.noiseFloor:.3g}")

inside = window_stats(d, lambda c: np.abs(c) < 0.2)
tip = window_stats(d, lambda c: (np.abs(c.real + 2) <= 0.1) & (np.abs(c.imag) <= 0.1))
print(f"main cardioid mean density {inside.meanDensity:.3g}; near c = -2 mean density {tip.meanDensity:.3g}")

render(d, "slice_density.pgm", "log")
print("wrote slice_density.pgm")
