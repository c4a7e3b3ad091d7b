"""Computational dynamics of rational maps."""

from .errors import RatDynError, ValidationError
from .expr import map_from_literal, parse_map
from .sphere import RationalMap, SpherePoint, chordal, iterate_orbit, make_rational_map, polynomial_map
from .ergodic import lyapunov, polynomial_green_escape, sample_equilibrium
from .conditions import check_ba, check_ce, check_ce2, check_fa, check_fa_prime, deep_returns, fit_ce_constants
from .distortion import a_plus, distortion_estimate, estimate_kappa
from .parameter import activity_indicator, bifurcation_density, lyapunov_slice, make_family, xi
from .transversality import (detect_misiurewicz, direction_set, large_scale_probe, tau_form,
                             track_hyperbolic_set, track_periodic)

__version__ = "0.1.0"
