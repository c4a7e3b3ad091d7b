"""
Checking expansion conditions along critical orbits
===================================================

Collet-Eckmann, basic assumption and free assumption are statements about
the derivative along critical-value orbits.  Each check returns a report
with a verdict per critical value and the first failing step.
"""

import math

from ratdyn.conditions import check_ba, check_ce, check_fa, deep_returns, fit_ce_constants
from ratdyn.expr import map_from_literal

cheb = map_from_literal("z^2-2")
g, g0 = fit_ce_constants(cheb, 30)
print(f"fitted CE constants for z^2-2: gamma = {g:.12f} (log 4 = {math.log(4):.12f}), gamma0 = {g0:.1e}")
print("CE at the fitted constants:", check_ce(cheb, g, g0, 30).passed)
print("BA with alpha = 0.01:", check_ba(cheb, 0.01, 50).passed)
print("FA with eta = 0.1, iota = 0.01:", check_fa(cheb, 0.1, 0.01, 50).passed)

# near the airplane parameter the critical orbit comes back close to 0
air = map_from_literal("z^2-1.7549")
rep = check_fa(air, 0.1, 1, 4)
print("FA for z^2-1.7549:", rep.perCriticalValue[0].verdict, "at n =", rep.perCriticalValue[0].failStep)

rs = deep_returns(air, 0.1, 0.05, 40)[0]
for r in rs.returns:
    print(f"  deep return at nu = {r.nu}, bound period {r.boundPeriod}{' (open)' if r.open else ''}")
