import math

import numpy as np
import pytest

from ratdyn.conditions import (ConditionConstants, check_ba, check_ce, check_ce2, check_fa,
                               check_fa_prime, check_fa_prime_structure, deep_returns,
                               fa_from_fa_prime_constants, fit_ce_constants, from_returns, k_of_z,
                               lower_hull_fit, restricted_sums)
from ratdyn.errors import NotNearCritical, ValidationError
from ratdyn.expr import map_from_literal
from ratdyn.sphere import iterate_orbit

import oracles

LOG4 = math.log(4)
CHEB = map_from_literal("z^2-2")


def test_constants_validation():
    with pytest.raises(ValidationError):
        ConditionConstants(gamma=-1)
    assert ConditionConstants(gamma=1, alpha=0.001).probe_admissible
    assert not ConditionConstants(gamma=1, alpha=0.1).probe_admissible


def test_ce_examples():
    rep = check_ce(CHEB, LOG4, 0, 30)
    assert rep.passed and abs(rep.margin) < 1e-9
    assert not check_ce(map_from_literal("z^2"), 0.1, 0, 1).passed
    rep = check_ce(CHEB, LOG4 + 0.1, 0, 10)
    assert rep.perCriticalValue[0].failStep == 1


def test_ce_derivative_product_is_power_of_four():
    orb = iterate_orbit(CHEB, -2, 30)
    n = np.arange(31)
    assert np.allclose(np.exp(orb.cumLog - n * LOG4), 1, rtol=1e-9, atol=0)


def test_fit_ce_constants():
    g, g0 = fit_ce_constants(CHEB, 30)
    assert abs(g - LOG4) < 1e-9 and g0 <= 1e-9
    g, _ = fit_ce_constants(map_from_literal("z^2+i"), 30)
    assert g == pytest.approx(0.5 * math.log(abs(4 + 4j)), abs=1e-6)
    f = map_from_literal("z^2+i")
    g, g0 = fit_ce_constants(f, 1)
    assert (g, g0) == (pytest.approx(iterate_orbit(f, 1j, 1).cumLog[1]), 0.0)


def test_lower_hull_fit_line():
    S = 0.7 * np.arange(10) - 0.3
    S[0] = 0
    g, g0 = lower_hull_fit(S)
    assert S[1:] == pytest.approx(g * np.arange(1, 10) - g0)


def test_ce2_examples():
    rep = check_ce2(CHEB, 0, 0, 1, metric="plane")
    assert rep.perCriticalValue[0].slack[1] == pytest.approx(math.log(2 * math.sqrt(2)), abs=1e-12)
    assert check_ce2(CHEB, 0, 0.1, 0).passed
    rep = check_ce2(map_from_literal("z^2"), 0, 0, 2)
    assert not rep.passed


def test_ba_examples():
    assert check_ba(CHEB, 0.01, 50).passed
    assert check_ba(map_from_literal("z^2+i"), 0.01, 50).passed
    # z^2 - 1: v = -1, f(v) = 0 is critical
    rep = check_ba(map_from_literal("z^2-1"), 0.5, 5)
    assert rep.perCriticalValue[0].failStep == 1


def test_fa_examples():
    assert check_fa(CHEB, 0.1, 0.01, 50).passed
    assert check_fa(map_from_literal("z^3+0.3"), 0.0, 0.0, 20).passed
    f = map_from_literal("z^2-1.7549")
    rep = check_fa(f, 0.1, 1, 4)
    assert not rep.passed
    sums = dict(restricted_sums(f, 0.1, 4))[0]
    assert sums[-1] == pytest.approx(oracles.restricted_sum(-1.7549, 0.1, 4, "chordal"), abs=1e-9)
    assert sums[-1] < -4


def test_deep_returns_examples():
    assert deep_returns(CHEB, 0.1, 0.05, 50)[0].returns == ()
    rs = deep_returns(map_from_literal("z^2-1.7549"), 0.1, 0.05, 20)[0]
    assert [r.nu for r in rs.returns] == [2]
    assert deep_returns(map_from_literal("z^2-1.7549"), 0, 0.05, 20)[0].returns == ()


def test_fa_prime_examples():
    assert check_fa_prime(CHEB, 0.1, 0.05, 0.5, 50).passed
    s = [from_returns([(10, 5)])]
    assert check_fa_prime_structure(s, 0.34).passed and not check_fa_prime_structure(s, 0.32).passed
    s = [from_returns([(2, 18)])]
    assert not check_fa_prime_structure(s, 0.89).passed and check_fa_prime_structure(s, 0.91).passed


def test_fa_from_fa_prime_constants():
    eta, iota = fa_from_fa_prime_constants(0.1, 0.05, 1, math.e, 0.1)
    assert eta == pytest.approx(0.01) and iota == pytest.approx(0.2)
    assert fa_from_fa_prime_constants(1e-12, 0.05, 1, math.e, 0.1)[1] < 1e-11
    assert fa_from_fa_prime_constants(0.3, 0.05, 1e9, 5.0, 0.1)[1] == pytest.approx(0.3 * math.log(5))


def test_k_of_z_examples():
    for log_fp, expected in ((-5, 8), (-1, 3)):
        z = math.exp(log_fp) / 2
        assert k_of_z(CHEB, z, metric="plane") == expected
    with pytest.raises(NotNearCritical):
        k_of_z(CHEB, 0)
