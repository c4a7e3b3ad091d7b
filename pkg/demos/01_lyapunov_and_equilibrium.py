"""
Lyapunov exponents from equilibrium samples
===========================================

Backward orbits of a generic point equidistribute to the measure of maximal
entropy.  Averaging log|f'| over such a sample estimates the Lyapunov
exponent, which we compare with closed forms and with the Green function
of a polynomial.
"""

import math

from ratdyn.ergodic import lyapunov, polynomial_green_escape, sample_equilibrium
from ratdyn.expr import map_from_literal

# z^d has Lyapunov exponent log d; the Chebyshev map z^2 - 2 also gives log 2
for lit, exact in (("z^2", math.log(2)), ("z^3", math.log(3)), ("z^2-2", math.log(2))):
    est = lyapunov(map_from_literal(lit), depth=50, count=20000, seed=0)
    print(f"{lit:8s} L = {est.value:.5f} +- {est.stderr:.1e}   exact {exact:.5f}")

# for polynomials L = log d + sum over critical points of G(c)
f = map_from_literal("z^2+0.5+0.6i")
est = lyapunov(f, 50, 20000)
print(f"z^2+0.5+0.6i: sampled {est.value:.4f}, log 2 + G(0) = {math.log(2) + polynomial_green_escape(f, 0):.4f}")

# the sample itself lives on the Julia set
s = sample_equilibrium(map_from_literal("z^2-1"), depth=40, count=5)
print("five equilibrium points of z^2 - 1:", [complex(p.affine) for p in s.points][:5])
