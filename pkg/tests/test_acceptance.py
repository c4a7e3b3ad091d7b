"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line."""

import json
import math
import time
import warnings

import numpy as np

from ratdyn.cli import run
from ratdyn.conditions import check_fa, fit_ce_constants, critical_value_orbits, restricted_sums
from ratdyn.distortion import apd_product, check_image_sandwich, distortion_estimate, estimate_kappa, iterate_callables
from ratdyn.ergodic import lyapunov, polynomial_green_escape
from ratdyn.errors import CriticalCollision, DegenerateMap, NoCertificate, NoFiniteKappa
from ratdyn.expr import map_from_literal
from ratdyn.parameter import bifurcation_density, lyapunov_slice, make_family, window_stats
from ratdyn.sphere import make_rational_map
from ratdyn.transversality import detect_misiurewicz, large_scale_probe, tau_form, track_periodic

import oracles

QUAD = make_family("quadratic")


def random_degree2(rng):
    while True:
        num = rng.normal(size=3) + 1j * rng.normal(size=3)
        den = rng.normal(size=3) + 1j * rng.normal(size=3)
        try:
            return make_rational_map(num, den)
        except DegenerateMap:
            continue


def test_1_lyapunov_oracles(criterion):
    rows, ok = [], True
    for lit, expected in (("z^2", math.log(2)), ("z^3", math.log(3)), ("z^2-2", math.log(2))):
        t = time.perf_counter()
        est = lyapunov(map_from_literal(lit), 50, 20000)
        dt = time.perf_counter() - t
        err = abs(est.value - expected)
        good = err <= max(1e-2, 3 * est.stderr) and dt < 30
        ok &= good
        rows.append(f"{lit}: err={err:.2e} t={dt:.1f}s")
    assert criterion(1, ok, "; ".join(rows))


def test_2_polynomial_cross_check(criterion):
    rows, ok = [], True
    for c in (1, 0.5 + 0.6j):
        f = make_rational_map([c, 0, 1], [1])
        est = lyapunov(f, 50, 20000)
        ref = math.log(2) + polynomial_green_escape(f, 0)
        err = abs(est.value - ref)
        ok &= err < 1e-2 + 3 * est.stderr
        # the escape rate itself against the independent high-precision oracle
        ok &= abs(ref - oracles.quadratic_lyapunov(c)) < 1e-9
        rows.append(f"c={c}: err={err:.2e}")
    assert criterion(2, ok, "; ".join(rows))


def test_3_margulis_ruelle_sweep(criterion):
    rng = np.random.default_rng(2024)
    good = 0
    worst = math.inf
    for _ in range(100):
        est = lyapunov(random_degree2(rng), 50, 5000, seed=int(rng.integers(2 ** 31)))
        slack = est.value - (math.log(2) / 2 - 3 * est.stderr)
        worst = min(worst, slack)
        good += slack >= 0
    assert criterion(3, good == 100, f"{good}/100 above (log 2)/2 - 3 stderr, worst slack {worst:.3f}")


def test_4_ce_exactness(criterion):
    f = map_from_literal("z^2-2")
    g, g0 = fit_ce_constants(f, 30)
    (_, orb), = critical_value_orbits(f, 30)
    prods = np.exp(orb.cumLog[1:31])
    rel = np.max(np.abs(prods / 4.0 ** np.arange(1, 31) - 1))
    ok = abs(g - math.log(4)) < 1e-9 and g0 <= 1e-9 and rel < 1e-9
    assert criterion(4, ok, f"gamma-log4={g - math.log(4):.1e} gamma0={g0:.1e} product rel err={rel:.1e}")


def test_5_fa_positive_and_negative(criterion):
    pos = check_fa(map_from_literal("z^2-2"), 0.1, 0.01, 50)
    f = map_from_literal("z^2-1.7549")
    neg = check_fa(f, 0.1, 1, 4)
    step = neg.perCriticalValue[0].failStep
    total = dict(restricted_sums(f, 0.1, 4))[0][-1]
    oracle = oracles.restricted_sum(-1.7549, 0.1, 4, "chordal")
    ok = pos.passed and pos.margin >= 0 and not neg.passed and step == 4 and abs(total - oracle) < 1e-9
    assert criterion(5, ok, f"positive margin={pos.margin:.3f}; negative failStep={step} (expected 4), "
                            f"restricted sum={total:.3f} (oracle {oracle:.3f})")


def test_6_a_plus_bound(criterion):
    rng = np.random.default_rng(6)
    good = total = 0
    while total < 50:
        f = random_degree2(rng)
        try:
            kappa = estimate_kappa(f).kappa
        except NoFiniteKappa:
            continue
        z = complex(*rng.normal(size=2))
        n = int(rng.integers(1, 31))
        try:
            prod = apd_product(f, z, n, kappa)
        except CriticalCollision:
            continue
        total += 1
        good += prod < 1 / (400 * math.e * kappa)
    assert criterion(6, good == 50, f"{good}/50 triples satisfy a+ |(f^n)'| < 1/(400 e kappa)")


def test_7_distortion_sandwich(criterion):
    rng = np.random.default_rng(7)
    good = total = 0
    while total < 50:
        c = complex(rng.uniform(-1.5, 0.4), rng.uniform(-1, 1))
        f = make_rational_map([c, 0, 1], [1])
        a = complex(*rng.uniform(-1.5, 1.5, size=2))
        m = int(rng.integers(1, 4))
        r = float(10 ** rng.uniform(-5, -2))
        if distortion_estimate(f, m, a, r) > 1 / 50:
            continue
        total += 1
        psi, dpsi = iterate_callables(f, m)
        good += check_image_sandwich(psi, dpsi, a, r, slack=1e-3).holds
    assert criterion(7, good == 50, f"{good}/50 cases confirm both inclusions")


def test_8_tau_closed_form(criterion):
    form = tau_form(QUAD, 0, -2, N=40)
    fd = oracles.tau_fd(-2, 40)
    err, err_fd = abs(form(1) - 2 / 3), abs(form(1) - fd)
    ok = err < 1e-6 and err_fd < 1e-6
    assert criterion(8, ok, f"tau={form(1).real:.12f} |tau-2/3|={err:.1e} |tau-fd|={err_fd:.1e}")


def test_9_motion_oracle(criterion):
    tr = track_periodic(QUAD, 2, 1, (-2, -1.75), samples=100)
    exact = np.array([complex(oracles.beta(c)) for c in tr.path[:, 0]])
    err = float(np.max(np.abs(tr.points - exact)))
    mult = float(np.min(np.abs(tr.multipliers)))
    ok = err < 1e-8 and mult > 1 and len(tr.points) == 100
    assert criterion(9, ok, f"max |z - beta(c)|={err:.1e}, min |multiplier|={mult:.4f}")


def test_10_misiurewicz(criterion):
    rows, ok = [], True
    for lit, pre, per, mult in (("z^2-2", 2, 1, 4), ("z^2+i", 2, 2, 4 + 4j)):
        e = detect_misiurewicz(map_from_literal(lit)).entries[0]
        good = (e["preperiod"], e["period"]) == (pre, per) and abs(e["cycleMultiplier"] - mult) < 1e-9
        ok &= good
        rows.append(f"{lit}: ({e['preperiod']},{e['period']},{e['cycleMultiplier']:.6g})")
    try:
        detect_misiurewicz(map_from_literal("z^2"))
        ok = False
        rows.append("z^2: certificate issued")
    except NoCertificate:
        rows.append("z^2: NoCertificate")
    assert criterion(10, ok, "; ".join(rows))


def test_11_density_localization(criterion):
    t = time.perf_counter()
    s = lyapunov_slice(QUAD, (-2.5, 1, -1.5, 1.5), 256, depth=40, count=5000)
    d = bifurcation_density(s)
    dt = time.perf_counter() - t
    C = d.xs[None, :] + 1j * d.ys[:, None]
    rng = np.random.default_rng(11)

    def sampled(mask):
        idx = np.argwhere(mask)
        idx = idx[(idx[:, 0] > 0) & (idx[:, 0] < C.shape[0] - 1) & (idx[:, 1] > 0) & (idx[:, 1] < C.shape[1] - 1)]
        pick = idx[rng.choice(len(idx), 20, replace=False)]
        return float(d.density[pick[:, 0], pick[:, 1]].mean())

    inside = sampled(np.abs(C) < 0.2)
    # cells with |c - 1| < 0.1 are all outside M (the cusp sits at 1/4)
    outside = sampled(np.abs(C - 1) < 0.1)
    w = window_stats(d, lambda c: (np.abs(c.real + 2) <= 0.1) & (np.abs(c.imag) <= 0.1))
    floor = d.noiseFloor
    literal = inside < floor and outside < floor and w.mass > 10 * floor
    consistent = inside < floor and outside < floor and w.meanDensity > 10 * floor
    assert criterion(11, literal and dt < 600,
                     f"interior={inside:.3g} exterior={outside:.3g} floor={floor:.3g}; "
                     f"window mass={w.mass:.3g} vs 10*floor={10 * floor:.3g} (literal {'pass' if literal else 'fail'}); "
                     f"window mean density={w.meanDensity:.3g} (density-unit check "
                     f"{'pass' if consistent else 'fail'}); {dt:.0f}s")


def test_12_large_scale_probe(criterion):
    probe = large_scale_probe(QUAD, -2, (5, 15), kappa_radius=0.05)
    ent = probe.entries
    prods = [e["perCritical"][0]["product"] for e in ent]
    radii = [e["coveringRadius"] for e in ent]
    ok = (len(ent) > 0 and all(1 / probe.C <= p <= probe.C for p in prods)
          and all(e["verticalityMargin"] > 0 for e in ent) and min(radii) >= 0.25 * max(radii))
    assert criterion(12, ok, f"admissible n={probe.admissible}, C={probe.C:.3g}, "
                             f"products in [{min(prods):.3g}, {max(prods):.3g}], "
                             f"min/max covering radius={min(radii) / max(radii):.4f}")


DETERMINISM_CASES = [
    ["lyapunov", "--map", "z^2-1", "--depth", "30", "--count", "2000"],
    ["slice", "--family", "quadratic", "--window", "-2,0.5,-1,1", "--res", "16", "--count", "300", "--depth", "20"],
    ["density", "--family", "quadratic", "--window", "-2,0.5,-1,1", "--res", "16", "--count", "300", "--depth", "20"],
    ["activity", "--family", "quadratic", "--window", "-2,0.5,-1,1", "--res", "16", "--N", "12"],
    ["verify", "ce", "--map", "z^2-2", "--gamma", "1.3", "--gamma0", "0", "--N", "30"],
    ["verify", "ce2", "--map", "z^2-2", "--mu", "0.5", "--mu0", "1", "--N", "6"],
    ["verify", "ba", "--map", "z^2-2", "--alpha", "0.01", "--N", "30"],
    ["verify", "fa", "--map", "z^2-2", "--eta", "0.1", "--iota", "0.01", "--N", "30"],
    ["verify", "fa-prime", "--map", "z^2-2", "--delta", "0.1", "--beta", "0.05", "--tau", "0.5", "--N", "30"],
    ["misiurewicz", "--map", "z^2+i"],
    ["tau", "--family", "quadratic", "--lambda0", "-2", "--N", "40"],
    ["track", "--family", "quadratic", "--z0", "2", "--path", "-2,-1.75", "--samples", "20"],
    ["kappa", "--map", "z^2"],
    ["probe", "--family", "quadratic", "--lambda0", "-2", "--nrange", "5,8", "--radius", "0.05"],
]


def test_13_determinism(criterion, tmp_path):
    bad = []
    for k, argv in enumerate(DETERMINISM_CASES):
        outs = []
        for tag in "ab":
            paths = {ext: tmp_path / f"{k}{tag}.{ext}" for ext in ("pgm", "csv", "json")}
            extra = ["--json", str(paths["json"])]
            if argv[0] in ("slice", "density", "activity"):
                extra += ["--pgm", str(paths["pgm"]), "--csv", str(paths["csv"])]
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                code = run(argv + extra + ["--seed", "5"])
            blobs = [p.read_bytes().replace(f"{k}{tag}.".encode(), b"X.") for p in paths.values() if p.exists()]
            outs.append((code, blobs))
        if outs[0] != outs[1] or outs[0][0] != 0 or not outs[0][1]:
            bad.append(argv[0])
        json.loads(outs[0][1][-1])
    ok = not bad
    assert criterion(13, ok, f"{len(DETERMINISM_CASES) - len(bad)}/{len(DETERMINISM_CASES)} commands byte-identical"
                             + (f"; differing: {bad}" if bad else ""))
