"""Complex distortion, the scale a+, the constants kappa (K1)-(K6), the
expansion budget and numerical checks of the distortion lemmas.

Distortion is measured in the affine chart: log psi' is continued along the
segment from the disk centre to each sample point (16 steps, summing
principal logs of consecutive ratios), and Dist is the diameter of the
sampled set of values.  The result is a sampled lower bound of the true
supremum.  A disk on which psi' winds around 0 contains a critical point and
gets +inf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import (CriticalCollision, DegenerateMap, NoFiniteKappa, NoSamples,
                     RatDynError, ValidationError)
from .parameter import heval
from .sphere import RationalMap, SpherePoint, critical_distance, iterate_orbit

BOUNDARY = 64
PATH_STEPS = 16
WINDING_POINTS = 256
LOG_400E = math.log(400 * math.e)


# --------------------------------------------------------------------------
# sampled distortion

def disk_samples(center, radius, count: int, seed: int = 0, boundary: int = BOUNDARY) -> np.ndarray:
    """Centre, a boundary net and ``count`` uniform interior points of D(center, radius)."""
    rng = np.random.default_rng([seed, 0xD15])
    center = complex(center)
    ring = center + radius * np.exp(2j * np.pi * np.arange(boundary) / boundary)
    u, phi = rng.random(count), 2 * np.pi * rng.random(count)
    inner = center + radius * np.sqrt(u) * np.exp(1j * phi)
    return np.concatenate(([center], ring, inner))


def _continued_log(vals):
    """Branch of log along the last axis, anchored at the principal log of vals[..., 0]."""
    with np.errstate(divide="ignore", invalid="ignore"):
        steps = np.log(vals[..., 1:] / vals[..., :-1])
        out = np.log(vals[..., 0]) + steps.sum(-1)
    return np.where(np.isfinite(out), out, np.nan)


def _winding(vals) -> float:
    """Winding number of the closed polygon vals around 0."""
    closed = np.concatenate((vals, vals[:1]))
    with np.errstate(divide="ignore", invalid="ignore"):
        return float(np.angle(closed[1:] / closed[:-1]).sum() / (2 * np.pi))


def iterate_log_derivatives(f: RationalMap, center, points, m: int) -> np.ndarray:
    """Continued log (f^k)'(x), k = 0..m, for each sample point x.

    Each factor log f'(f^i(x)) is continued along the segment center -> x;
    the result has shape (m + 1, len(points)) and NaN where an orbit leaves
    the affine chart.
    """
    t = np.linspace(0.0, 1.0, PATH_STEPS + 1)
    z = complex(center) + (np.asarray(points, complex) - complex(center))[:, None] * t
    L = np.zeros((m + 1, z.shape[0]), dtype=complex)
    for i in range(m):
        L[i + 1] = L[i] + _continued_log(f.deriv(z))
        z = f.affine(z)
    return L


def log_gap(values) -> float:
    """Diameter of a finite set of complex numbers (+inf if any is not finite)."""
    v = np.asarray(values, complex).ravel()
    if not np.all(np.isfinite(v)):
        return math.inf
    return float(np.abs(v[:, None] - v[None, :]).max())


def _iterate_winding(f: RationalMap, center, radius, m: int) -> float:
    z = complex(center) + radius * np.exp(2j * np.pi * np.arange(WINDING_POINTS) / WINDING_POINTS)
    total = 0.0
    for _ in range(m):
        D = f.deriv(z)
        if not np.all(np.isfinite(D)):
            return math.nan
        total += _winding(D)
        z = f.affine(z)
    return total


def distortion_estimate(f, m: int, center, radius: float, sampleCount: int = 256, seed: int = 0) -> float:
    """Sampled lower bound of Dist(f^m, D(center, radius)) in the affine chart.

    ``f`` is a RationalMap (psi = f^m) or a callable giving psi' directly (m
    is then ignored).  Returns +inf when psi' has a zero in the disk
    (argument principle on 256 boundary points) or leaves the chart.
    """
    if not radius > 0:
        raise ValidationError("radius must be positive")
    if m < 0:
        raise ValidationError("m must be nonnegative")
    P = disk_samples(center, radius, sampleCount, seed)
    if isinstance(f, RationalMap):
        w = _iterate_winding(f, center, radius, m)
        if not math.isfinite(w) or round(w) != 0:
            return math.inf
        return log_gap(iterate_log_derivatives(f, center, P, m)[m])
    dpsi = f
    ring = complex(center) + radius * np.exp(2j * np.pi * np.arange(WINDING_POINTS) / WINDING_POINTS)
    D = np.asarray(dpsi(ring), complex)
    if not np.all(np.isfinite(D)) or round(_winding(D)) != 0:
        return math.inf
    t = np.linspace(0.0, 1.0, PATH_STEPS + 1)
    z = complex(center) + (P - complex(center))[:, None] * t
    return log_gap(_continued_log(np.asarray(dpsi(z), complex)))


def iterate_callables(f: RationalMap, m: int):
    """(psi, dpsi) for psi = f^m in the affine chart."""
    def psi(z):
        z = np.asarray(z, complex)
        for _ in range(m):
            z = f.affine(z)
        return z

    def dpsi(z):
        z = np.asarray(z, complex)
        D = np.ones_like(z)
        for _ in range(m):
            D = D * f.deriv(z)
            z = f.affine(z)
        return D

    return psi, dpsi


@dataclass(frozen=True)
class SandwichReport:
    innerRatio: float
    outerRatio: float
    winding: int
    innerHolds: bool
    outerHolds: bool

    @property
    def holds(self) -> bool:
        return self.innerHolds and self.outerHolds

    def to_dict(self):
        return {"innerRatio": self.innerRatio, "outerRatio": self.outerRatio, "winding": self.winding,
                "innerHolds": self.innerHolds, "outerHolds": self.outerHolds}


def check_image_sandwich(psi, dpsi, center, radius: float, inner: float = 0.9, outer: float = 1.1,
                         slack: float = 1e-3, boundary: int = WINDING_POINTS) -> SandwichReport:
    """Test D(psi(a), inner r|psi'(a)|) in psi(D(a,r)) in D(psi(a), outer r|psi'(a)|) on the boundary.

    The image contains the inner disk when the boundary curve winds once
    around psi(a) and stays outside it; it lies in the outer disk when the
    boundary does (maximum principle for psi - psi(a)).
    """
    a = complex(center)
    pa = complex(np.asarray(psi(np.array([a])))[0])
    da = complex(np.asarray(dpsi(np.array([a])))[0])
    B = a + radius * np.exp(2j * np.pi * np.arange(boundary) / boundary)
    vals = np.asarray(psi(B), complex) - pa
    ratios = np.abs(vals) / (radius * abs(da))
    w = int(round(_winding(vals))) if np.all(np.isfinite(vals)) else 0
    lo, hi = float(ratios.min()), float(ratios.max())
    return SandwichReport(lo, hi, w, w == 1 and lo >= inner - slack, bool(hi <= outer + slack))


# --------------------------------------------------------------------------
# the scale a+

def _orbit_logs(f, z, n, metric):
    orb = iterate_orbit(f, z, n, metric)
    ld = orb.logDeriv[:n]
    if not np.all(np.isfinite(ld)):
        raise CriticalCollision("orbit meets the critical set (or leaves the chart)")
    return orb.cumLog, ld


def log_a_plus(f: RationalMap, z, n: int, kappa: float, metric: str = "chordal") -> float:
    if n < 1:
        raise ValidationError("n must be >= 1")
    if not kappa > 0:
        raise ValidationError("kappa must be positive")
    cum, ld = _orbit_logs(f, z, n, metric)
    return -(LOG_400E + 2 * math.log(kappa) + float(logsumexp(cum[:n] - ld)))


def a_plus(f: RationalMap, z, n: int, kappa: float, metric: str = "chordal") -> float:
    """(400 e kappa^2 sum_{j<n} |(f^j)'(z)| / |f'(f^j z)|)^-1 with chordal derivatives."""
    return math.exp(log_a_plus(f, z, n, kappa, metric))


def apd_product(f: RationalMap, z, n: int, kappa: float, metric: str = "chordal") -> float:
    """a+(z, n) |(f^n)'(z)|."""
    cum, _ = _orbit_logs(f, z, n, metric)
    return math.exp(log_a_plus(f, z, n, kappa, metric) + cum[n])


# --------------------------------------------------------------------------
# kappa

@dataclass(frozen=True)
class KappaConstants:
    kappa: float
    witnesses: dict
    box: dict

    def to_dict(self):
        return {"kappa": self.kappa, "witnesses": self.witnesses, "box": self.box}


def _unit(X):
    return X / np.sqrt(np.abs(X[..., 0]) ** 2 + np.abs(X[..., 1]) ** 2)[..., None]


def _fibonacci_sphere(n: int):
    k = np.arange(n) + 0.5
    zc = 1 - 2 * k / n
    phi = np.pi * (1 + 5 ** 0.5) * k
    rho = np.sqrt(1 - zc ** 2)
    w = rho * np.exp(1j * phi)  # point on the unit sphere -> stereographic (x + iy)/(1 - z)
    X = np.stack([w, (1 - zc) + 0j], -1)
    X[zc > 0.999999] = [1, 0]
    return _unit(X)


def _rotate_from(X, t):
    """Lift of the point with coordinate t in the unitary chart centred at X."""
    x, y = X[..., 0], X[..., 1]
    return np.stack([np.conj(y) * t + x, -np.conj(x) * t + y], -1)


def _chart_coordinate(X, W):
    """Coordinate in the unitary chart centred at X of the lifted point W."""
    x, y = X[..., 0], X[..., 1]
    top = y * W[..., 0] - x * W[..., 1]
    bot = np.conj(x) * W[..., 0] + np.conj(y) * W[..., 1]
    return top, bot


def _chart_poly(num, den, X, d):
    """Coefficients (u, v) in t of the map read in unitary charts at X and at f(X).

    t is the chart coordinate around X, the value u/v the chart coordinate
    around f(X).  Computed exactly from d+1 values by an FFT.
    """
    n = d + 1
    om = np.exp(2j * np.pi * np.arange(n) / n)
    L = _rotate_from(X[:, None, :], om[None, :])
    P = heval(num, L[..., 0], L[..., 1])
    Q = heval(den, L[..., 0], L[..., 1])
    FX = np.stack([heval(num, X[:, 0], X[:, 1]), heval(den, X[:, 0], X[:, 1])], -1)
    Y = _unit(FX)
    top, bot = _chart_coordinate(Y[:, None, :], np.stack([P, Q], -1))
    u = np.fft.fft(top, axis=1) / n
    v = np.fft.fft(bot, axis=1) / n
    return u, v, Y, FX


def _eval_rows(coef, t):
    # coef (M, n) ascending, t (M, S)
    out = np.zeros(t.shape, complex)
    for k in range(coef.shape[1] - 1, -1, -1):
        out = out * t + coef[:, k][:, None]
    return out


def _k6_threshold(u, v, k_max: float = 2.0 ** 40, r_levels: int = 8, circle: int = 64) -> float:
    """Smallest kappa (to 1%) with the two disk inclusions of (K6), one critical point.

    u, v are chart coefficients at the critical point (see _chart_poly).
    Chordal radius s corresponds to chart radius s / sqrt(4 - s^2).
    """
    th = np.exp(2j * np.pi * np.arange(circle) / circle)

    def max_min(s):
        s = np.asarray(s, float)
        R = s / np.sqrt(4 - s ** 2)
        t = R[:, None] * th[None, :]
        U, V = _eval_rows(np.repeat(u[None], len(s), 0), t), _eval_rows(np.repeat(v[None], len(s), 0), t)
        dist = 2 * np.abs(U) / np.sqrt(np.abs(U) ** 2 + np.abs(V) ** 2)
        return dist.max(1), dist.min(1)

    def ok(kappa):
        r = (1 - 1e-9) / kappa * 4.0 ** -np.arange(r_levels)
        s_in = np.sqrt(r) / kappa
        s_out = kappa * np.sqrt(r)
        mx, _ = max_min(np.minimum(s_in, 1.999))
        if not np.all(mx < r):
            return False
        big = s_out >= 2
        if np.all(big):
            return True
        _, mn = max_min(s_out[~big])
        return bool(np.all(mn >= r[~big]))

    k = 1.0
    if ok(k):
        return k
    while not ok(k):
        k *= 2
        if k > k_max:
            return math.inf
    lo, hi = k / 2, k
    while hi / lo > 1.01:
        mid = math.sqrt(lo * hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def kappa_parameter_points(family, lambda0, radius: float, grid: int = 5, floor: float = 2.0 ** -10):
    """Sampled parameters: lambda0 plus a fixed pattern at the dyadic scales
    radius * 2^-j (j >= 0) down to floor/2.  Patterns at a given scale do not
    depend on the radius, so a larger box samples a superset."""
    lam0 = family.param(lambda0)
    k = family.paramDim
    if k == 1:
        a = np.linspace(-1, 1, grid)
        pat = (a[None, :] + 1j * a[:, None]).ravel()[:, None]
    else:
        rng = np.random.default_rng(0xCAFE)
        pat = rng.uniform(-1, 1, (grid * grid, k)) + 1j * rng.uniform(-1, 1, (grid * grid, k))
    pts = [lam0]
    if radius > 0:
        s = float(radius)
        while True:
            pts.extend(lam0 + s * pat)
            s *= 0.5
            if s < floor / 2:
                break
    return np.array(pts)


def estimate_kappa(family, lambda0=None, radius: float = 0.0, grid: int = 5,
                   phaseSamples: int = 400) -> KappaConstants:
    """Smallest kappa (to 1%) satisfying the sampled (K1)-(K6) on the parameter box.

    ``family`` is a Family or a single RationalMap (a constant family).  The
    box is the polydisk of the given radius around lambda0, sampled by
    ``kappa_parameter_points``; phase points are a Fibonacci net plus rings
    around each critical point.  Quantities are read in unitary charts with
    coordinates scaled to chordal units (factor 2), so |g'| is the chordal
    derivative.  Raises NoFiniteKappa on multiple or colliding critical points.
    """
    from .parameter import Family, _affine_family, marked_critical_points
    if isinstance(family, RationalMap):
        d = family.degree
        family = _affine_family("map", "affine", family.num, family.den, np.zeros((1, d + 1)),
                                np.zeros((1, d + 1)), {"kind": "map"}, (0j,))
    if not isinstance(family, Family):
        raise ValidationError("estimate_kappa needs a Family or a RationalMap")
    if radius < 0 or grid < 1:
        raise ValidationError("radius must be >= 0 and grid >= 1")
    lam0 = family.param(family.center if lambda0 is None else lambda0)
    try:
        tracks = marked_critical_points(family, lam0)
    except RatDynError as exc:
        raise NoFiniteKappa(f"critical points at lambda0 are not simple: {exc}") from None
    if any(t.multiplicity > 1 for t in tracks):
        raise NoFiniteKappa("a critical point is multiple; (K2) cannot hold")
    lams = kappa_parameter_points(family, lam0, radius, grid)
    base = _fibonacci_sphere(phaseSamples)
    ring_s = np.array([0.3, 0.1, 0.03, 0.01, 1e-3])
    ring_t = (ring_s / np.sqrt(4 - ring_s ** 2))[:, None] * np.exp(2j * np.pi * np.arange(8) / 8)[None, :]
    crit = np.zeros((len(lams), len(tracks), 2), complex)
    k1 = k2hi = k3 = k6 = 0.0
    k2lo = math.inf
    d = family.degree
    for a, lam in enumerate(lams):
        try:
            num, den, dnum, dden = family.jet(lam)
            C = np.array([[p.z, p.w] for p in (t.c(lam) for t in tracks)])
        except RatDynError as exc:
            raise NoFiniteKappa(f"critical tracks break down in the box: {exc}") from None
        C = _unit(C)
        crit[a] = C
        rings = _rotate_from(C[:, None, None, :], ring_t[None])
        X = _unit(np.concatenate([base, rings.reshape(-1, 2)]))
        u, v, Y, FX = _chart_poly(num, den, X, d)
        g1 = u[:, 1] / v[:, 0]  # chordal units: the first derivative is unchanged
        g2 = (2 * u[:, 2] / v[:, 0] - 2 * u[:, 1] * v[:, 1] / v[:, 0] ** 2) / 2
        dist = critical_distance(family.map_at(lam), X[:, 0], X[:, 1])
        good = dist > 1e-12
        ratio = np.abs(g1[good]) / dist[good]
        k2hi = max(k2hi, float(ratio.max()))
        k2lo = min(k2lo, float(ratio.min()))
        with np.errstate(divide="ignore", invalid="ignore"):
            k3 = max(k3, float(np.nanmax(dist[good] * np.abs(g2[good] / g1[good]))))
        s = np.sqrt(np.abs(FX[:, 0]) ** 2 + np.abs(FX[:, 1]) ** 2)
        speed = 0.0
        for j in range(family.paramDim):
            G = np.stack([heval(dnum[j], X[:, 0], X[:, 1]), heval(dden[j], X[:, 0], X[:, 1])], -1)
            speed = max(speed, float((2 * np.abs(Y[:, 0] * G[:, 1] - Y[:, 1] * G[:, 0]) / s).max()))
        k1 = max(k1, float(np.abs(g1).max()), float(np.abs(g2).max()), speed)
        uc, vc, _, _ = _chart_poly(num, den, C, d)
        for i in range(len(tracks)):
            k6 = max(k6, _k6_threshold(uc[i], vc[i]))
    # (K4): critical spacing across all pairs of sampled parameters
    n_c = len(tracks)
    spacing = math.inf
    flat = crit.reshape(-1, 2)
    idx = np.repeat(np.arange(n_c)[None, :], len(lams), 0).ravel()
    for i in range(n_c):
        for j in range(n_c):
            if i == j:
                continue
            A, B = flat[idx == i], flat[idx == j]
            w = np.abs(A[:, None, 0] * B[None, :, 1] - A[:, None, 1] * B[None, :, 0])
            spacing = min(spacing, float(2 * w.min()))
    if n_c > 1 and spacing <= 1e-6:
        raise NoFiniteKappa("critical points collide in the box")
    k4 = 5 / spacing if n_c > 1 else 0.0
    # (K5): chordal speed of the critical tracks by central differences
    k5 = 0.0
    h = 1e-6 * max(1.0, float(np.abs(lam0).max()))
    for lam in lams:
        for t in tracks:
            if t.constant:
                continue
            for j in range(family.paramDim):
                e = np.zeros(family.paramDim, complex)
                e[j] = h
                try:
                    p, q = t.c(lam + e), t.c(lam - e)
                except RatDynError as exc:
                    raise NoFiniteKappa(f"critical tracks break down in the box: {exc}") from None
                P_, Q_ = _unit(np.array([p.z, p.w])), _unit(np.array([q.z, q.w]))
                k5 = max(k5, float(2 * abs(P_[0] * Q_[1] - P_[1] * Q_[0]) / (2 * h)))
    if not math.isfinite(k6):
        raise NoFiniteKappa("(K6) fails for every tested kappa")
    parts = {"K1": k1, "K2": max(k2hi, 1 / k2lo if k2lo > 0 else math.inf), "K3": k3, "K4": k4,
             "K5": k5, "K6": k6}
    kappa = max(1.0, *parts.values())
    if not math.isfinite(kappa):
        raise NoFiniteKappa("a sampled condition is unbounded")
    kappa = math.nextafter(kappa, math.inf)
    witnesses = {"K1": {"sup": k1}, "K2": {"min": k2lo, "max": k2hi}, "K3": {"sup": k3},
                 "K4": {"minSpacing": spacing, "needs": k4}, "K5": {"supSpeed": k5},
                 "K6": {"threshold": k6}, "binding": max(parts, key=parts.get)}
    box = {"lambda0": [[z.real, z.imag] for z in lam0], "radius": radius, "grid": grid,
           "parameterSamples": int(len(lams)), "phaseSamples": int(X.shape[0])}
    return KappaConstants(kappa, witnesses, box)


# --------------------------------------------------------------------------
# Mane constants and the expansion budget

def mane_constants(f: RationalMap, delta2: float, N: int, sampleCount: int = 2000, seed: int = 0,
                   metric: str = "chordal", depth: int = 30) -> tuple[float, float]:
    """Fit (gamma', gamma0') with |(f^n)'(z)| >= e^{n gamma' - gamma0'} on sampled segments.

    Starting points come from the equilibrium measure; a segment z, ..., f^(n-1)(z)
    is admissible while it stays out of C(f, delta2).  The fit is the lower
    hull of the per-length minima.
    """
    from .conditions import lower_hull_fit
    from .ergodic import sample_equilibrium
    if not delta2 > 0:
        raise ValidationError("delta2 must be positive")
    if N < 1:
        raise ValidationError("N must be >= 1")
    s = sample_equilibrium(f, depth, sampleCount, seed)
    x, y = np.array(s.points_x), np.array(s.points_y)
    alive = np.ones(len(x), bool)
    S = np.zeros(len(x))
    mins = [0.0]
    for _ in range(N):
        alive &= critical_distance(f, x, y) >= delta2
        if not alive.any():
            break
        S = S + f.log_deriv_hom(x, y, metric)
        alive &= np.isfinite(S)
        if not alive.any():
            break
        mins.append(float(S[alive].min()))
        P, Q = f.hom(x, y)
        n = np.sqrt(np.abs(P) ** 2 + np.abs(Q) ** 2)
        x, y = P / n, Q / n
    if len(mins) < 2:
        raise NoSamples("no sampled point lies outside C(f, delta2)")
    return lower_hull_fit(np.array(mins))


@dataclass(frozen=True)
class ExpansionBudget:
    sigma: float
    sigma0: float
    gammaPrime: float
    gamma0Prime: float
    rho: float | None
    l1: float
    kappa: float
    M: float
    eta: float | None = None

    def to_dict(self):
        return dict(self.__dict__)


def rho_lower_bound(kappa: float, sigma: float, sigma0: float, eta: float) -> float:
    """Explicit scale from the good-time argument:
    (400 e kappa^2 (kappa eta^-2 e^sigma0/(1-e^-sigma) + eta^-1 e^sigma0/(1-e^-sigma/2)))^-1."""
    if sigma <= 0 or eta <= 0:
        return 0.0
    S = (kappa / eta ** 2 * math.exp(sigma0) / -math.expm1(-sigma)
         + math.exp(sigma0) / eta / -math.expm1(-sigma / 2))
    return 1.0 / (400 * math.e * kappa ** 2 * S)


def expansion_budget(gamma, gamma0, mu, mu0, kappa, gammaPrime, gamma0Prime, M, eta=None) -> ExpansionBudget:
    """sigma = min(gamma/3, mu, gamma'), sigma0 = log kappa + gamma' + mu0 + gamma0' + 1,
    l1 = 11 e kappa M; rho from ``rho_lower_bound`` when eta is given."""
    vals = dict(gamma=gamma, gamma0=gamma0, mu=mu, mu0=mu0, kappa=kappa, gammaPrime=gammaPrime,
                gamma0Prime=gamma0Prime, M=M)
    for k, v in vals.items():
        if not (math.isfinite(v) and v >= 0):
            raise ValidationError(f"{k} must be finite and nonnegative")
    if kappa <= 0:
        raise ValidationError("kappa must be positive")
    sigma = min(gamma / 3, mu, gammaPrime)
    sigma0 = math.log(kappa) + gammaPrime + mu0 + gamma0Prime + 1
    l1 = 11 * math.e * kappa * M
    rho = rho_lower_bound(kappa, sigma, sigma0, eta) if eta is not None else None
    return ExpansionBudget(sigma, sigma0, gammaPrime, gamma0Prime, rho, l1, kappa, M, eta)


# --------------------------------------------------------------------------
# good times and lemma checks

@dataclass(frozen=True)
class GoodTimes:
    times: tuple
    m: int
    density: float
    theoreticalBound: float | None
    logProducts: np.ndarray

    def to_dict(self):
        return {"times": list(self.times), "m": self.m, "density": self.density,
                "theoreticalBound": self.theoreticalBound,
                "logProducts": [float(x) for x in self.logProducts]}


def good_time_density_bound(iota: float, gamma: float, kappa: float, sigma: float) -> float:
    """1 - (4 iota / gamma)(1 + 1.2 log kappa / sigma)."""
    return 1 - 4 * iota / gamma * (1 + 1.2 * math.log(kappa) / sigma)


def good_times(f: RationalMap, criticalIndex: int, m: int, rho: float, kappa: float,
               metric: str = "chordal", iota=None, gamma=None, sigma=None) -> GoodTimes:
    """Times n in (m, 2m] with |(f^n)'(v)| a+(v, n) > rho, v = f(c_i)."""
    if m < 1:
        raise ValidationError("m must be >= 1")
    crit = f.critical
    if not 0 <= criticalIndex < len(crit):
        raise ValidationError("critical index out of range")
    v = f(crit[criticalIndex][0])
    cum, ld = _orbit_logs(f, v, 2 * m, metric)
    base = -(LOG_400E + 2 * math.log(kappa))
    terms = cum[: 2 * m] - ld
    logs = np.array([base - float(logsumexp(terms[:n])) + cum[n] for n in range(m + 1, 2 * m + 1)])
    times = tuple(n for n, lp in zip(range(m + 1, 2 * m + 1), logs) if lp > (math.log(rho) if rho > 0 else -math.inf))
    bound = None
    if iota is not None and gamma is not None and sigma is not None:
        bound = good_time_density_bound(iota, gamma, kappa, sigma)
    return GoodTimes(times, m, len(times) / m, bound, logs)


@dataclass(frozen=True)
class LemmaReport:
    worstRatio: float
    violations: int
    cases: int
    aPlus: float
    details: list = field(default_factory=list)

    def to_dict(self):
        return {"worstRatio": self.worstRatio, "violations": self.violations, "cases": self.cases,
                "aPlus": self.aPlus, "label": "sampled lower bound of distortion"}


def verify_dist_lemma(f: RationalMap, z, n: int, kappa: float, sampleCount: int = 20, seed: int = 0,
                      innerSamples: int = 64, radius_scale: float = 1.0) -> LemmaReport:
    """Compare Dist(f^(m-j), f^j(D(y, r))) with r / (100 a+) on random sub-disks of D(z, a+).

    Radii are chordal; in the affine chart they are scaled by (1 + |z|^2)/2.
    ``radius_scale`` < 1 samples only smaller sub-disks.
    """
    z = SpherePoint.of(z).affine
    if not np.isfinite(z):
        raise ValidationError("verify_dist_lemma needs a finite base point")
    a = a_plus(f, z, n, kappa)
    scale = (1 + abs(z) ** 2) / 2
    rng = np.random.default_rng([seed, 0xD1])
    worst, bad, details = 0.0, 0, []
    for case in range(sampleCount):
        r = a * radius_scale * rng.uniform(0.01, 1.0)
        off = (a - r) * scale * math.sqrt(rng.random()) * np.exp(2j * np.pi * rng.random())
        y = z + off
        m = int(rng.integers(1, n + 1))
        j = int(rng.integers(0, m))
        P = disk_samples(y, r * scale, innerSamples, seed + case)
        L = iterate_log_derivatives(f, y, P, m)
        dist = log_gap(L[m] - L[j])
        ratio = dist / (r / (100 * a))
        worst = max(worst, ratio)
        bad += ratio >= 1
        details.append({"r": r, "j": j, "m": m, "dist": dist, "ratio": ratio})
    return LemmaReport(worst, int(bad), sampleCount, a, details)


@dataclass(frozen=True)
class FirstEntryReport:
    worstMargin: float
    samples: int
    byLength: dict
    largeDelta: bool

    @property
    def holds(self) -> bool:
        return self.worstMargin > 0

    def to_dict(self):
        return {"worstMargin": self.worstMargin, "samples": self.samples,
                "byLength": {str(k): v for k, v in self.byLength.items()}, "largeDelta": self.largeDelta}


def verify_first_entry_expansion(f: RationalMap, mu: float, mu0: float, delta: float, N: int,
                                 sampleCount: int = 200, seed: int = 0, metric: str = "chordal") -> FirstEntryReport:
    """Check log|(f^n)'(z)| > n mu - mu0 - 1 on sampled first entries into C(f, delta).

    Samples are built backwards: a random point of C(f, delta) is pulled
    back along random branches; every preimage chain that has stayed out of
    C(f, delta) gives a point z with first entry at time n = chain length.
    """
    from .ergodic import preimages
    if not delta > 0 or N < 1:
        raise ValidationError("delta must be positive and N >= 1")
    rng = np.random.default_rng([seed, 0xF1E])
    from .conditions import dynamical_critical_points
    # targets: critical points that the orbit conditions constrain (not infinity for polynomials)
    C = np.array([[c.z, c.w] for _, c in dynamical_critical_points(f)])
    C = _unit(C)
    pick = rng.integers(0, len(C), sampleCount)
    s = delta * np.sqrt(rng.random(sampleCount))
    t = s / np.sqrt(4 - s ** 2) * np.exp(2j * np.pi * rng.random(sampleCount))
    W = _unit(_rotate_from(C[pick], t))
    x, y = W[:, 0], W[:, 1]
    cum = np.zeros(sampleCount)
    alive = np.ones(sampleCount, bool)
    worst, total, by_len = math.inf, 0, {}
    for n in range(1, N + 1):
        idx = np.nonzero(alive)[0]
        if idx.size == 0:
            break
        px, py = preimages(f, x[idx], y[idx])
        b = rng.integers(0, f.degree, idx.size)
        nx, ny = px[np.arange(idx.size), b], py[np.arange(idx.size), b]
        inside = critical_distance(f, nx, ny) < delta
        alive[idx[inside]] = False
        keep = ~inside
        idx, nx, ny = idx[keep], nx[keep], ny[keep]
        if idx.size == 0:
            break
        cum[idx] += f.log_deriv_hom(nx, ny, metric)
        x[idx], y[idx] = nx, ny
        margin = cum[idx] - (n * mu - mu0 - 1)
        worst = min(worst, float(margin.min()))
        total += idx.size
        by_len[n] = {"count": int(idx.size), "minMargin": float(margin.min())}
    if total == 0:
        raise NoSamples("no first-entry segment found")
    return FirstEntryReport(worst, total, by_len, delta > 0.1)
