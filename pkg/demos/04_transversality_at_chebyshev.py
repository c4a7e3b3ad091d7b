"""
Transversality and the large scale probe at c = -2
==================================================

At the Chebyshev parameter the critical value is preperiodic to a repelling
fixed point.  The transversality form compares how the critical orbit and
the motion of its landing point depend on c; for the quadratic family its
value is 2/3.  The probe then pushes a small parameter disk forward and
measures the image size.
"""

from ratdyn.expr import map_from_literal
from ratdyn.parameter import make_family
from ratdyn.transversality import detect_misiurewicz, large_scale_probe, tau_form, track_periodic

quad = make_family("quadratic")

cert = detect_misiurewicz(map_from_literal("z^2-2"))
print("Misiurewicz certificate:", cert.entries[0])

form = tau_form(quad, 0, -2)
print(f"tau = {form(1).real:.12f} with N = {form.truncationN}, tail bound {form.tailBound:.1e}")

track = track_periodic(quad, 2, 1, (-2, -1.75), samples=6)
for c, z in zip(track.path[:, 0], track.points):
    print(f"  beta({c.real:.3f}) = {z.real:.10f}")

probe = large_scale_probe(quad, -2, (5, 12), kappa_radius=0.05)
print(f"C = {probe.C:.3g}, admissible n = {probe.admissible}")
for e in probe.entries:
    print(f"  n = {e['n']:2d}  r|(f^n)'| = {e['perCritical'][0]['product']:.4g}  covering radius {e['coveringRadius']:.4g}")
