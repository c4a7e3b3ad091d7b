import math
import warnings

import numpy as np
import pytest

from ratdyn.errors import (CriticalCollision, DegenerateTransversality, MotionBreakdown, NoCertificate,
                           NotPeriodic, TailUnbounded)
from ratdyn.expr import map_from_literal
from ratdyn.parameter import make_family
from ratdyn.transversality import (classify_point, detect_misiurewicz, direction_set, large_scale_probe,
                                   semiconjugacy_residual, tau_form, track_hyperbolic_set, track_periodic)

import oracles

QUAD = make_family("quadratic")


def test_tau_closed_form():
    form = tau_form(QUAD, 0, -2, N=40)
    assert abs(form(1) - 2 / 3) < 1e-12
    assert form.consistent
    auto = tau_form(QUAD, 0, -2)
    assert auto.tailBound < 1e-8 and abs(auto(1) - 2 / 3) < 1e-8


def test_tau_matches_series_oracle():
    for c in (-2, 1j, -0.1 + 0.65j):
        for N in (0, 3, 10):
            try:
                form = tau_form(QUAD, 0, c, N=N)
            except CriticalCollision:
                continue
            assert form(1) == pytest.approx(oracles.tau_series_quadratic(c, N), rel=1e-10)


def test_tau_n0_single_term():
    c = 0.3 + 0.4j
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TailUnbounded)
        form = tau_form(QUAD, 0, c, N=0)
    assert form(1) == pytest.approx(1 + 1 / (2 * c))


def test_tau_collision():
    with pytest.raises(CriticalCollision):
        tau_form(QUAD, 0, 0)


def test_tau_unbounded_tail_warns():
    # c = 0.2: v is attracted to a fixed point, derivatives shrink, gamma <= 0
    with pytest.warns(TailUnbounded):
        form = tau_form(QUAD, 0, 0.2, N=10)
    assert form.tailBound == math.inf


def test_track_beta():
    tr = track_periodic(QUAD, 2, 1, (-2, -1.75), samples=100)
    cs = tr.path[:, 0]
    exact = np.array([complex(oracles.beta(c)) for c in cs])
    assert np.max(np.abs(tr.points - exact)) < 1e-8
    assert np.all(np.abs(tr.multipliers) > 1)
    assert tr.points[-1] == pytest.approx((1 + 2 * math.sqrt(2)) / 2)


def test_track_constant_path():
    tr = track_periodic(QUAD, 2, 1, (-2, -2), samples=5)
    assert np.all(tr.points == tr.points[0])


def test_track_rejects_attracting():
    z = (1 - math.sqrt(1 - 0.4)) / 2
    with pytest.raises(NotPeriodic):
        track_periodic(QUAD, z, 1, (0.1, 0.2))


def test_track_breakdown_records_last_good():
    # beta(c) has multiplier 1 at c = 1/4
    with pytest.raises(MotionBreakdown) as exc:
        track_periodic(QUAD, 2, 1, (-2, 0.5))
    assert exc.value.last_good is not None and exc.value.last_good[0].real < 0.25


def test_hyperbolic_set():
    tracks = track_hyperbolic_set(QUAD, [-2, 2], (-2, -1.9))
    assert len(tracks) == 2
    assert semiconjugacy_residual(QUAD, [-2, 2], tracks).max() < 1e-8
    single = track_hyperbolic_set(QUAD, [2], (-2, -1.9))[0]
    direct = track_periodic(QUAD, 2, 1, (-2, -1.9))
    assert np.allclose(single.points, direct.points)
    with pytest.raises(NotPeriodic):
        track_hyperbolic_set(QUAD, [0, -2, 2], (-2, -1.9))
    assert classify_point(map_from_literal("z^2-2"), -2) == (1, 1)


def test_misiurewicz_examples():
    cert = detect_misiurewicz(map_from_literal("z^2-2"))
    e = cert.entries[0]
    assert (e["preperiod"], e["period"]) == (2, 1) and abs(e["cycleMultiplier"] - 4) < 1e-9
    cert = detect_misiurewicz(map_from_literal("z^2+i"))
    e = cert.entries[0]
    assert (e["preperiod"], e["period"]) == (2, 2)
    assert abs(e["cycleMultiplier"] - oracles.multiplier_of_cycle(1j, 1j - 1, 2)) < 1e-9
    with pytest.raises(NoCertificate):
        detect_misiurewicz(map_from_literal("z^2"))


def test_direction_set_examples():
    ds = direction_set([[1, 0], [0, 1]])
    assert np.allclose(ds.u, np.eye(2))
    assert np.abs(ds.tauMatrix @ ds.uMixed) == pytest.approx([2 ** -0.5] * 2)
    ds = direction_set([tau_form(QUAD, 0, -2)])
    assert ds.u[0] == pytest.approx([1]) and ds.M == pytest.approx(2.5, rel=1e-8)
    with pytest.raises(DegenerateTransversality):
        direction_set([[1, 2], [2, 4]])


def test_direction_set_biorthogonal():
    rng = np.random.default_rng(4)
    T = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    ds = direction_set(T)
    P = T @ ds.u.T
    off = P - np.diag(np.diag(P))
    assert np.abs(off).max() < 1e-8 and np.abs(np.diag(P)).min() > 1e-8


def test_probe_chebyshev():
    probe = large_scale_probe(QUAD, -2, (5, 15), kappa_radius=0.05)
    ns = probe.admissible
    assert ns == list(range(6, 16))
    prods = [e["perCritical"][0]["product"] for e in probe.entries]
    assert all(1 / probe.C <= p <= probe.C for p in prods)
    assert max(prods) / min(prods) < 1.001
    radii = [e["coveringRadius"] for e in probe.entries]
    assert min(radii) >= 0.25 * max(radii) > 0
    assert all(e["verticalityMargin"] > 0 for e in probe.entries)


def test_probe_collision():
    with pytest.raises(CriticalCollision):
        large_scale_probe(QUAD, 0, (2, 4), kappa=3.0, M=2.5)
