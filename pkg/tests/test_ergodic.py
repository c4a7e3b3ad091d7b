import math

import numpy as np
import pytest

from ratdyn.ergodic import (green_lift, green_truncation_bound, lyapunov, polynomial_green_escape,
                            polynomial_lyapunov_oracle, sample_equilibrium)
from ratdyn.errors import ExceptionalAnchor
from ratdyn.expr import map_from_literal
from ratdyn.sphere import make_lift

import oracles

LOG2 = math.log(2)


def test_green_lift_examples():
    F = make_lift([0, 0, 1], [1, 0, 0])  # (x^2, y^2)
    assert green_lift(F, (2, 1), 10) == pytest.approx(LOG2, abs=1e-3)
    assert green_lift(F, (1, 2), 10) == pytest.approx(LOG2, abs=1e-3)
    assert green_truncation_bound(F, 10) >= 0


def test_green_lift_symmetric_point():
    F = make_lift([0, 0, 1], [1, 0, 0])
    # ||(1, 1)|| = sqrt 2 at every step, so d^-n log sqrt 2 -> 0
    assert abs(green_lift(F, (1, 1), 30)) < 1e-8


def test_samples_on_julia_sets():
    s = sample_equilibrium(map_from_literal("z^2"), 30, 500, seed=1)
    assert np.allclose(np.abs(s.affine), 1, atol=1e-6)
    s = sample_equilibrium(map_from_literal("z^2-2"), 30, 500, seed=1)
    z = s.affine
    assert np.all(np.abs(z.imag) < 1e-6) and np.all(np.abs(z.real) <= 2 + 1e-6)


def test_exceptional_anchor():
    with pytest.raises(ExceptionalAnchor):
        sample_equilibrium(map_from_literal("z^2"), 30, 10, seed=0, anchor=0)


def test_seed_determinism():
    f = map_from_literal("z^2+0.2+0.3i")
    a = sample_equilibrium(f, 30, 300, seed=5)
    b = sample_equilibrium(f, 30, 300, seed=5)
    assert np.array_equal(a.points_x, b.points_x) and np.array_equal(a.points_y, b.points_y)


@pytest.mark.parametrize("lit,expected", [("z^2", LOG2), ("z^3", math.log(3)), ("z^2-2", LOG2)])
def test_lyapunov_closed_forms(lit, expected):
    est = lyapunov(map_from_literal(lit), 50, 20000, seed=3)
    assert abs(est.value - expected) <= max(1e-2, 3 * est.stderr)


def test_polynomial_green_escape_examples():
    sq = map_from_literal("z^2")
    assert polynomial_green_escape(sq, 2) == pytest.approx(LOG2, abs=1e-9)
    assert polynomial_green_escape(sq, 0.5) == 0
    p = map_from_literal("z^2+1")
    g = polynomial_green_escape(p, 0)
    assert g == pytest.approx(oracles.green_quadratic(1), abs=1e-9)
    est = lyapunov(p, 50, 20000, seed=2)
    assert abs(est.value - LOG2 - g) < 3 * est.stderr + 1e-3
    assert polynomial_lyapunov_oracle(p) == pytest.approx(oracles.quadratic_lyapunov(1), abs=1e-9)


def test_two_seeds_consistent():
    f = map_from_literal("(z^2+0.5)/(z^2-2i)")
    a, b = lyapunov(f, 50, 5000, seed=1), lyapunov(f, 50, 5000, seed=2)
    assert abs(a.value - b.value) <= 4 * (a.stderr + b.stderr)
