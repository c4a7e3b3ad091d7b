"""Finite-horizon checks and fits for the orbit conditions CE, CE2, BA, FA
and FA', deep-return structure, bound periods and the scale k(z).

All checks read log spherical derivatives from ``OrbitRecord``s.  A report
states a derivative condition only; membership of the critical set in the
Julia set is never certified.

For a polynomial the critical point at infinity is a superattracting fixed
point in the Fatou set, so it is left out of every critical-orbit check.
Slacks within floating roundoff of zero are reported as exactly zero, so
that an identity such as |(f^n)'(-2)| = 4^n for z^2 - 2 yields margin 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (CriticalCollision, HorizonExceeded, NotNearCritical,
                     ScanCapExceeded, ValidationError)
from .sphere import (RationalMap, SpherePoint, chordal_hom, critical_distance,
                     iterate_orbit, log_derivative)

SCAN_CAP = 10 ** 6
ROUNDOFF = 1e-12


@dataclass(frozen=True)
class ConditionConstants:
    gamma: float = 0.0
    gamma0: float = 0.0
    mu: float = 0.0
    mu0: float = 0.0
    alpha: float = 0.0
    eta: float = 0.0
    iota: float = 0.0
    beta: float = 0.0
    deltaFA: float = 0.0
    tauFA: float = 0.0

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if not (v >= 0 and math.isfinite(v)):
                raise ValidationError(f"constant {k} must be a finite nonnegative real")

    @property
    def probe_admissible(self) -> bool:
        return self.gamma > 0 and self.alpha < self.gamma / 200

    def to_dict(self):
        return dict(self.__dict__)


@dataclass(frozen=True)
class CriticalVerdict:
    criticalIndex: int
    verdict: str
    failStep: int | None
    margin: float
    slack: np.ndarray = field(repr=False)

    @property
    def passed(self) -> bool:
        return self.verdict.startswith("pass")

    def to_dict(self):
        return {"criticalIndex": self.criticalIndex, "verdict": self.verdict,
                "failStep": self.failStep, "margin": _jsonable(self.margin)}


@dataclass(frozen=True)
class ConditionReport:
    condition: str
    perCriticalValue: tuple
    horizonN: int
    metric: str = "chordal"
    sampled: bool = False
    notes: tuple = ()

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.perCriticalValue)

    @property
    def margin(self) -> float:
        return min((v.margin for v in self.perCriticalValue), default=math.inf)

    def to_dict(self):
        return {"condition": self.condition, "passed": self.passed,
                "margin": _jsonable(self.margin), "horizonN": self.horizonN,
                "metric": self.metric, "sampled": self.sampled,
                "scope": "derivative condition only",
                "notes": list(self.notes),
                "perCriticalValue": [v.to_dict() for v in self.perCriticalValue]}


def _jsonable(x):
    x = float(x)
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def _verdict(index, slack, steps, scale, sampled=False) -> CriticalVerdict:
    """Fold a slack array (indexed by ``steps``) into a verdict."""
    slack = np.asarray(slack, dtype=float).copy()
    with np.errstate(invalid="ignore"):
        tiny = np.isfinite(slack) & (np.abs(slack) <= ROUNDOFF * np.asarray(scale, dtype=float))
    slack[tiny] = 0.0
    slack.setflags(write=False)
    if slack.size == 0:
        return CriticalVerdict(index, "pass (vacuous)", None, math.inf, slack)
    bad = np.nonzero(~(slack >= 0))[0]
    margin = float(np.min(slack)) if not np.isnan(slack).any() else -math.inf
    if bad.size:
        return CriticalVerdict(index, "fail", int(steps[bad[0]]), margin, slack)
    return CriticalVerdict(index, "pass (sampled)" if sampled else "pass", None, margin, slack)


# --------------------------------------------------------------------------
# critical orbits

def dynamical_critical_points(f: RationalMap) -> list[tuple[int, SpherePoint]]:
    """(index, c) for the critical points whose orbits the conditions constrain.

    Indices refer to ``f.critical``; for polynomials infinity is omitted.
    """
    out = []
    for i, (c, _) in enumerate(f.critical):
        if f.is_polynomial and c.is_infinity:
            continue
        out.append((i, c))
    return out


def critical_value_orbits(f: RationalMap, N: int, metric: str = "chordal"):
    """[(index, OrbitRecord of v = f(c) up to N)] for each dynamical critical point."""
    return [(i, iterate_orbit(f, f(c), N, metric)) for i, c in dynamical_critical_points(f)]


def _check_horizon(N, lo=1):
    if int(N) != N or N < lo:
        raise ValidationError(f"horizon N must be an integer >= {lo}")


# --------------------------------------------------------------------------
# CE

def check_ce(f: RationalMap, gamma: float, gamma0: float, N: int,
             metric: str = "chordal") -> ConditionReport:
    """|(f^n)'(v)| >= exp(n gamma - gamma0) for 0 <= n <= N and every critical value v.

    A critical hit along the orbit makes the product zero and is a failure
    at the first step whose product vanishes.
    """
    _check_horizon(N)
    n = np.arange(N + 1)
    out = []
    for i, orb in critical_value_orbits(f, N, metric):
        slack = orb.cumLog - n * gamma + gamma0
        scale = 1 + np.abs(orb.cumLog) + n * abs(gamma) + abs(gamma0)
        out.append(_verdict(i, slack, n, scale))
    return ConditionReport("CE", tuple(out), N, metric)


def lower_hull_fit(S: np.ndarray) -> tuple[float, float]:
    """Best (gamma, gamma0) with S[n] >= n gamma - gamma0 on n = 0..N.

    gamma is the slope of the lower convex hull edge over the midpoint N/2,
    gamma0 the smallest offset making every inequality hold (nudged up by
    one ulp when roundoff would leave a negative slack).
    """
    S = np.asarray(S, dtype=float)
    N = len(S) - 1
    if N < 1:
        raise ValidationError("need at least two orbit points to fit")
    if not np.all(np.isfinite(S)):
        raise CriticalCollision("orbit meets the critical set; no finite fit")
    hull = []
    for k in range(N + 1):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            if (S[b] - S[a]) * (k - a) >= (S[k] - S[a]) * (b - a):
                hull.pop()
            else:
                break
        hull.append(k)
    mid = N / 2
    gamma = (S[hull[1]] - S[hull[0]]) / (hull[1] - hull[0])
    for a, b in zip(hull, hull[1:]):
        if a <= mid <= b:
            gamma = (S[b] - S[a]) / (b - a)
            break
    n = np.arange(N + 1)
    gamma0 = float(max(0.0, np.max(n * gamma - S)))
    while np.min(S - n * gamma + gamma0) < 0:
        gamma0 = math.nextafter(gamma0, math.inf)
    return float(gamma), gamma0


def fit_ce_constants(f: RationalMap, N: int, metric: str = "chordal") -> tuple[float, float]:
    """Constants (gamma, gamma0) fitted on the worst critical value up to N."""
    _check_horizon(N)
    orbits = critical_value_orbits(f, N, metric)
    if not orbits:
        raise ValidationError("map has no dynamical critical points")
    S = np.min([orb.cumLog for _, orb in orbits], axis=0)
    return lower_hull_fit(S)


# --------------------------------------------------------------------------
# CE2

def full_tree_depth(d: int, leaves: int = 2 ** 14) -> int:
    return max(1, int(math.floor(math.log(leaves) / math.log(d) + 1e-9)))


def _backward_logs(f, x, y, metric):
    from .ergodic import preimages
    px, py = preimages(f, x, y)
    px, py = px.ravel(), py.ravel()
    return px, py, np.asarray(f.log_deriv_hom(px, py, metric), dtype=float)


def check_ce2(f: RationalMap, mu: float, mu0: float, N: int, branchSamples: int = 256,
              seed: int = 0, metric: str = "chordal", fullDepth: int | None = None) -> ConditionReport:
    """|(f^n)'(x)| > exp(n mu - mu0) for x in f^-n(C(f)), 0 <= n <= N.

    The backward tree is explored exhaustively up to ``fullDepth`` and by
    ``branchSamples`` seeded random branches beyond; in that case the verdict
    is labelled sampled (an estimate, never a certificate).
    """
    _check_horizon(N, lo=0)
    if branchSamples < 1:
        raise ValidationError("branchSamples must be >= 1")
    d = f.degree
    depth = full_tree_depth(d) if fullDepth is None else fullDepth
    rng = np.random.default_rng(seed)
    sampled = N > depth
    out = []
    for i, c in dynamical_critical_points(f):
        slack = np.empty(N + 1)
        slack[0] = mu0
        x, y = np.array([c.z]), np.array([c.w])
        acc = np.zeros(1)
        for n in range(1, N + 1):
            px, py, logs = _backward_logs(f, x, y, metric)
            acc = np.repeat(acc, d) + logs
            x, y = px, py
            if n > depth:
                # one random child per branch; the first sampled level picks the parents
                parents = len(acc) // d
                rows = rng.integers(0, parents, size=branchSamples) if n == depth + 1 else np.arange(parents)
                keep = rows * d + rng.integers(0, d, size=len(rows))
                x, y, acc = x[keep], y[keep], acc[keep]
            with np.errstate(invalid="ignore"):
                slack[n] = np.min(acc) - n * mu + mu0
        scale = 1 + np.arange(N + 1) * (abs(mu) + 10) + abs(mu0)
        out.append(_verdict(i, slack, np.arange(N + 1), scale, sampled))
    notes = (f"exhaustive to depth {depth}, {branchSamples} random branches beyond",) if sampled else ()
    return ConditionReport("CE2", tuple(out), N, metric, sampled, notes)


def fit_ce2_constants(f: RationalMap, N: int, branchSamples: int = 256, seed: int = 0,
                      metric: str = "chordal", fullDepth: int | None = None) -> tuple[float, float]:
    """(mu, mu0) from the lower hull of the worst backward derivative per depth."""
    rep = check_ce2(f, 0.0, 0.0, N, branchSamples, seed, metric, fullDepth)
    S = np.min([v.slack for v in rep.perCriticalValue], axis=0)
    return lower_hull_fit(S)


# --------------------------------------------------------------------------
# BA and FA

def check_ba(f: RationalMap, alpha: float, N: int, metric: str = "chordal") -> ConditionReport:
    """log|f'(f^n v)| > -n alpha for 1 <= n <= N."""
    _check_horizon(N)
    n = np.arange(1, N + 1)
    out = []
    for i, orb in critical_value_orbits(f, N, metric):
        logs = orb.logDeriv[1:]
        slack = logs + n * alpha
        out.append(_verdict(i, slack, n, 1 + np.abs(logs) + n * abs(alpha)))
    return ConditionReport("BA", tuple(out), N, metric)


def check_fa(f: RationalMap, eta: float, iota: float, N: int,
             metric: str = "chordal") -> ConditionReport:
    """sum_{j<n, d(f^j v, C) <= eta} log|f'(f^j v)| > -n iota for 1 <= n <= N.

    Each verdict carries the slack for every n, so violations after the
    first failure can be inspected too.
    """
    _check_horizon(N)
    if not 0 <= eta <= 2:
        raise ValidationError("eta must lie in [0, 2]")
    if iota < 0:
        raise ValidationError("iota must be nonnegative")
    n = np.arange(1, N + 1)
    out = []
    for i, orb in critical_value_orbits(f, N, metric):
        near = orb.critDistance[:N] <= eta
        terms = np.where(near, orb.logDeriv[:N], 0.0)
        partial = np.cumsum(terms)
        slack = partial + n * iota
        out.append(_verdict(i, slack, n, 1 + np.cumsum(np.abs(terms)) + n * abs(iota)))
    return ConditionReport("FA", tuple(out), N, metric)


def restricted_sums(f: RationalMap, eta: float, N: int, metric: str = "chordal"):
    """[(index, partial restricted sums for n = 1..N)] as used by check_fa."""
    res = []
    for i, orb in critical_value_orbits(f, N, metric):
        near = orb.critDistance[:N] <= eta
        res.append((i, np.cumsum(np.where(near, orb.logDeriv[:N], 0.0))))
    return res


# --------------------------------------------------------------------------
# deep returns and FA'

@dataclass(frozen=True)
class DeepReturn:
    nu: int
    boundPeriod: int
    freeLength: int
    closestCritical: int
    open: bool = False

    def to_dict(self):
        return dict(self.__dict__)


@dataclass(frozen=True)
class ReturnStructure:
    criticalIndex: int
    returns: tuple
    horizonN: int
    horizonExceeded: bool = False

    def to_dict(self):
        return {"criticalIndex": self.criticalIndex, "horizonN": self.horizonN,
                "horizonExceeded": self.horizonExceeded,
                "returns": [r.to_dict() for r in self.returns]}


def from_returns(pairs, criticalIndex: int = 0, horizonN: int | None = None) -> ReturnStructure:
    """ReturnStructure from explicit (nu, p) pairs, filling the free lengths."""
    rets = []
    prev_end = None
    for nu, p in pairs:
        free = nu if prev_end is None else nu - prev_end
        if prev_end is not None and free <= 0:
            raise ValidationError("returns must satisfy nu_i > nu_{i-1} + p_{i-1}")
        rets.append(DeepReturn(int(nu), int(p), int(free), 0))
        prev_end = nu + p
    h = horizonN if horizonN is not None else (prev_end or 0)
    return ReturnStructure(criticalIndex, tuple(rets), h)


def _closest_critical(f, p):
    cx, cy = f.critical_hom
    dist = chordal_hom(p.z, p.w, cx, cy)
    return int(np.argmin(dist))  # argmin keeps the lowest index on ties


def deep_returns(f: RationalMap, delta: float, beta: float, N: int,
                 raise_on_open: bool = False) -> list[ReturnStructure]:
    """Deep returns d(f^nu v, C) < delta^2 outside bound periods, per critical value.

    The bound period after a return to c is the least k >= 0 with
    d(f^{k+1}(f^nu v), f^{k+1}(c)) >= exp(-beta k).  A bound period still open
    at N is recorded with ``open=True`` and the lower bound N - nu; the
    structure is flagged ``horizonExceeded`` (HorizonExceeded is raised
    instead when ``raise_on_open``).
    """
    _check_horizon(N, lo=0)
    if not 0 <= delta < 1:
        raise ValidationError("delta must lie in [0, 1)")
    if beta <= 0:
        raise ValidationError("beta must be positive")
    crit = [c for c, _ in f.critical]
    result = []
    for i, orb in critical_value_orbits(f, N + 1):
        rets = []
        exceeded = False
        j = 0
        prev_end = None
        thr = delta ** 2
        while j <= N and thr > 0:
            if not orb.critDistance[j] < thr:
                j += 1
                continue
            nu = j
            ci = _closest_critical(f, orb.points[nu])
            shadow = iterate_orbit(f, crit[ci], N - nu + 1)
            p = None
            for k in range(0, N - nu):
                a, b = orb.points[nu + k + 1], shadow.points[k + 1]
                if chordal_hom(a.z, a.w, b.z, b.w) >= math.exp(-beta * k):
                    p = k
                    break
            free = nu if prev_end is None else nu - prev_end
            if p is None:
                exceeded = True
                rets.append(DeepReturn(nu, N - nu, free, ci, True))
                break
            rets.append(DeepReturn(nu, p, free, ci))
            prev_end = nu + p
            j = prev_end + 1
        if exceeded and raise_on_open:
            raise HorizonExceeded(f"bound period after return at {rets[-1].nu} open at N={N}")
        result.append(ReturnStructure(i, tuple(rets), N, exceeded))
    return result


def check_fa_prime_structure(structures, tau: float) -> ConditionReport:
    """sum_{i<=s} mu_i > (1 - tau)(nu_s + p_s) for every listed return s."""
    if not 0 < tau < 1:
        raise ValidationError("tau must lie in (0, 1)")
    if isinstance(structures, ReturnStructure):
        structures = [structures]
    out = []
    notes = []
    N = 0
    for rs in structures:
        N = max(N, rs.horizonN)
        free = np.cumsum([r.freeLength for r in rs.returns]) if rs.returns else np.zeros(0)
        ends = np.array([r.nu + r.boundPeriod for r in rs.returns], dtype=float)
        slack = free - (1 - tau) * ends
        out.append(_verdict(rs.criticalIndex, slack, np.arange(len(rs.returns)), 1 + ends))
        if rs.horizonExceeded:
            notes.append(f"critical {rs.criticalIndex}: last bound period open, checked with its lower bound")
    return ConditionReport("FA'", tuple(out), N, notes=tuple(notes))


def check_fa_prime(f: RationalMap, delta: float, beta: float, tau: float, N: int) -> ConditionReport:
    """FA' over the deep-return structure of every critical value (failStep = s)."""
    return check_fa_prime_structure(deep_returns(f, delta, beta, N), tau)


def fa_from_fa_prime_constants(tau, beta, gamma, kappa, delta) -> tuple[float, float]:
    """FA constants implied by FA': eta = delta^2, iota = tau log(kappa) max(1, 3(beta+log kappa)/(gamma+beta) - 1)."""
    for name, v in (("tau", tau), ("beta", beta), ("gamma", gamma), ("delta", delta)):
        if not v > 0:
            raise ValidationError(f"{name} must be positive")
    if not kappa > 1:
        raise ValidationError("kappa must exceed 1")
    lk = math.log(kappa)
    return delta ** 2, tau * lk * max(1.0, 3 * (beta + lk) / (gamma + beta) - 1)


# --------------------------------------------------------------------------
# k(z)

def first_exceeding_time(f: RationalMap, v, threshold: float, metric: str = "chordal",
                         cap: int = SCAN_CAP, chunk: int = 512) -> int:
    """Least k >= 1 with log|(f^k)'(v)| > threshold, scanning forward up to ``cap``."""
    p = SpherePoint.of(v)
    total = 0.0
    k0 = 0
    while k0 < cap:
        m = min(chunk, cap - k0)
        orb = iterate_orbit(f, p, m, metric)
        cum = total + orb.cumLog[1:]
        if np.isneginf(cum).any() or np.isnan(cum).any():
            raise CriticalCollision("critical value orbit meets the critical set")
        hit = np.nonzero(cum > threshold)[0]
        if hit.size:
            return k0 + int(hit[0]) + 1
        total = float(cum[-1])
        p = orb.points[-1]
        k0 += m
    raise ScanCapExceeded(f"threshold {threshold:.4g} not reached within {cap} steps")


def k_of_z(f: RationalMap, z, kappa: float | None = None, metric: str = "chordal",
           cap: int = SCAN_CAP) -> int:
    """k(z) = min{k >= 1 : log|(f^k)'(f(c))| > 1 - 1.9 log|f'(z)|}, c closest to z.

    Raises NotNearCritical when z is critical or farther than 1/kappa from
    the critical set (when kappa is given).
    """
    p = SpherePoint.of(z)
    dist = float(critical_distance(f, p.z, p.w))
    lz = log_derivative(f, p, metric)
    if dist == 0 or not math.isfinite(lz):
        raise NotNearCritical("k(z) is undefined at a critical point")
    if kappa is not None and dist > 1 / kappa:
        raise NotNearCritical(f"distance {dist:.3g} to the critical set exceeds 1/kappa")
    c = f.critical[_closest_critical(f, p)][0]
    return first_exceeding_time(f, f(c), 1 - 1.9 * lz, metric, cap)
