"""Transversality forms, continuation of repelling cycles and finite
hyperbolic sets, Misiurewicz certificates, direction sets and the probe of
the large scale condition.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (CriticalCollision, DegenerateTransversality, MotionBreakdown,
                     NoAdmissibleTimes, NoCertificate, NotPeriodic, RatDynError,
                     TailUnbounded, ValidationError)
from .parameter import (Family, critical_jet, make_family,
                        marked_critical_points, wedge)
from .sphere import RationalMap, SpherePoint, chordal, chordal_hom

TAIL_TARGET = 1e-8
FIT_HORIZON = 60
MAX_TRUNCATION = 10000


def _family(fam) -> Family:
    return fam if isinstance(fam, Family) else make_family(fam)


# --------------------------------------------------------------------------
# transversality forms

@dataclass(frozen=True)
class TransversalityForm:
    """tau_i as a covector: ``components[k]`` = tau_i(e_k).

    tau_i(u) = dv_i/dlambda.u + sum_{j=0}^{N} eta(f^j v_i)/(f^j)'(v_i), a
    tangent at v_i in the plane chart (``chart`` = "inverse" when v_i is far
    out).  ``tailBound`` = kappa_eta e^gamma0 e^{-(N+1) gamma}/(1 - e^-gamma)
    bounds the omitted terms under CE(gamma, gamma0) along the orbit;
    ``crossCheck`` is |tau - xi_N'/(f^N)'(v)| per direction.
    """

    i: int
    components: np.ndarray
    truncationN: int
    tailBound: float
    gamma: float
    gamma0: float
    kappaEta: float
    crossCheck: np.ndarray
    chart: str = "plane"

    def __call__(self, u) -> complex:
        return complex(np.dot(self.components, np.atleast_1d(np.asarray(u, complex))))

    @property
    def consistent(self) -> bool:
        return bool(np.all(self.crossCheck <= self.tailBound + 1e-9))

    def to_dict(self):
        return {"i": self.i, "components": [[c.real, c.imag] for c in self.components],
                "truncationN": self.truncationN, "tailBound": self.tailBound, "gamma": self.gamma,
                "gamma0": self.gamma0, "kappaEta": self.kappaEta,
                "crossCheck": [float(x) for x in self.crossCheck], "chart": self.chart}


def tail_bound(kappa_eta: float, gamma: float, gamma0: float, N: int) -> float:
    if not gamma > 0:
        return math.inf
    return kappa_eta * math.exp(gamma0 - (N + 1) * gamma) / -math.expm1(-gamma)


def _truncation_for(kappa_eta, gamma, gamma0, target=TAIL_TARGET) -> int | None:
    if not gamma > 0:
        return None
    if kappa_eta == 0:
        return 0
    # kappa e^g0 e^{-(N+1) g} / (1 - e^-g) < target
    need = (math.log(kappa_eta) + gamma0 - math.log(-math.expm1(-gamma)) - math.log(target)) / gamma - 1
    return min(MAX_TRUNCATION, max(0, math.floor(need) + 1))


def tau_form(family, i: int, lambda0, N: int | None = None, ce=None) -> TransversalityForm:
    """Transversality form of critical point i at lambda0.

    With N = None the truncation is the smallest N whose tail bound is below
    1e-8.  CE constants (gamma, gamma0) default to a lower-hull fit of the
    chordal derivatives along the first max(60, N + 1) steps of the orbit of
    v_i.  If gamma <= 0 the tail is +inf and a TailUnbounded warning is issued.
    """
    from .conditions import lower_hull_fit
    fam = _family(family)
    tracks = marked_critical_points(fam, lambda0)
    if not 0 <= i < len(tracks):
        raise ValidationError(f"critical index {i} out of range")
    if N is not None and N < 0:
        raise ValidationError("N must be nonnegative")
    horizon = max(FIT_HORIZON, (N or 0) + 1)
    k = fam.paramDim
    basis = np.eye(k, dtype=complex)

    def jet_for(n, u):
        j = critical_jet(fam, tracks[i], lambda0, n, u)
        if not (np.all(np.isfinite(j.logDeriv)) and np.all(np.isfinite(j.series))):
            raise CriticalCollision(f"orbit of critical value {i} meets the critical set")
        return j

    jets = [jet_for(horizon, basis[a]) for a in range(k)]
    j0 = jets[0]
    v = j0.points[0]
    vscale = (1 + abs(v.affine) ** 2) / 2 if j0.chart == "plane" else (1 + abs(1 / v.affine) ** 2 if v.affine != 0 else 1) / 2
    kappa_eta = max(float(jt.etaSph.max()) for jt in jets) * vscale
    if ce is None:
        gamma, gamma0 = lower_hull_fit(j0.logDeriv)
    else:
        gamma, gamma0 = (float(x) for x in ce)
    if N is None:
        N = _truncation_for(kappa_eta, gamma, gamma0)
        if N is None:
            N = horizon - 1
        if N + 1 > horizon:
            jets = [jet_for(N + 1, basis[a]) for a in range(k)]
    tail = tail_bound(kappa_eta, gamma, gamma0, N)
    if not math.isfinite(tail):
        warnings.warn(TailUnbounded("CE fit gives gamma <= 0; tail bound is infinite"), stacklevel=2)
    comps = np.array([jt.ratio[0] + jt.series[: N + 1].sum() for jt in jets])
    cross = np.array([abs(c - jt.ratio[N]) for c, jt in zip(comps, jets)])
    return TransversalityForm(i, comps, int(N), tail, float(gamma), float(gamma0), kappa_eta, cross, j0.chart)


# --------------------------------------------------------------------------
# continuation of periodic and preperiodic points

@dataclass(frozen=True)
class MotionTrack:
    """Continuation of a point with f^(l+p)(z) = f^l(z) along a parameter path.

    ``residuals`` are |f^(l+p)(z_t) - f^l(z_t)| (|f^p(z_t) - z_t| for cycles),
    ``multipliers`` the multipliers (f^p)' of the landing cycle.
    """

    path: np.ndarray
    points: np.ndarray
    residuals: np.ndarray
    multipliers: np.ndarray
    period: int
    preperiod: int = 0
    flagged: bool = False

    def to_dict(self):
        c = lambda a: [[z.real, z.imag] for z in a]
        return {"path": c(self.path.ravel()), "points": c(self.points), "residuals": self.residuals.tolist(),
                "multipliers": c(self.multipliers), "period": self.period, "preperiod": self.preperiod,
                "flagged": self.flagged}


def _iterate_with_deriv(f: RationalMap, z: complex, n: int):
    D = 1.0 + 0j
    for _ in range(n):
        D *= complex(f.deriv(z))
        z = complex(f.affine(z))
    return z, D


def _residual(f, z, pre, p):
    a, Da = _iterate_with_deriv(f, z, pre)
    b, Db = _iterate_with_deriv(f, a, p)
    return b - a, Da * (Db - 1), Db


def _newton(f, z, pre, p, iters=40, tol=1e-13):
    for _ in range(iters):
        r, d, _ = _residual(f, z, pre, p)
        if not (np.isfinite(r) and np.isfinite(d)) or d == 0:
            return z, False
        step = r / d
        z = z - step
        if abs(step) <= tol * max(1.0, abs(z)):
            return z, True
    return z, False


def _path_points(family: Family, path, samples: int):
    try:
        start, end = path
    except (TypeError, ValueError):
        raise ValidationError("path must be a pair (lambda_start, lambda_end)") from None
    a, b = family.param(start), family.param(end)
    if samples < 2:
        raise ValidationError("samples must be >= 2")
    return a, b, np.linspace(0.0, 1.0, samples)


def _continue(family, z0, pre, p, path, samples, res_tol=1e-10, mult_floor=1 + 1e-6):
    a, b, ts = _path_points(family, path, samples)
    length = float(np.linalg.norm(b - a))
    max_dt = 0.01  # initial step: path length / 100

    def state(t, z):
        f = family.map_at(a + t * (b - a))
        r, _, mult = _residual(f, z, pre, p)
        return f, abs(r), mult

    f0 = family.map_at(a)
    z, ok = _newton(f0, complex(z0), pre, p)
    _, res, mult = state(0.0, z)
    if not ok or res >= res_tol * max(1.0, abs(z)):
        raise NotPeriodic(f"start point does not satisfy f^{pre + p} = f^{pre} (residual {res:.3g})")
    if abs(mult) <= mult_floor:
        raise NotPeriodic(f"cycle multiplier {abs(mult):.6g} is not repelling")
    pts, resid, mults = [z], [res], [mult]
    t = 0.0
    for target in ts[1:]:
        dt = min(max_dt, target - t)
        while t < target - 1e-15:
            dt = min(dt, target - t)
            f = family.map_at(a + (t + dt) * (b - a))
            znew, ok = _newton(f, z, pre, p)
            if ok:
                _, res, mult = state(t + dt, znew)
                ok = res < res_tol * max(1.0, abs(znew)) and abs(znew - z) < 0.25 * max(1.0, abs(z))
            if not ok:
                dt /= 2
                if dt * max(length, 1.0) < 1e-12:
                    raise MotionBreakdown("Newton continuation failed", last_good=a + t * (b - a))
                continue
            if abs(mult) <= mult_floor:
                raise MotionBreakdown(f"multiplier modulus reached {abs(mult):.8g}", last_good=a + t * (b - a))
            z, t = znew, t + dt
            dt = min(2 * dt, max_dt)
        pts.append(z)
        resid.append(res)
        mults.append(mult)
    lams = a[None, :] + ts[:, None] * (b - a)[None, :]
    return MotionTrack(lams, np.array(pts), np.array(resid), np.array(mults), p, pre)


def track_periodic(family, z0, p: int, path, samples: int = 101) -> MotionTrack:
    """Continue a repelling p-periodic point along the segment path = (start, end).

    The track is reported at ``samples`` equally spaced parameters; between
    them steps start at 1/100 of the path and are halved on Newton failure.
    """
    if p < 1:
        raise ValidationError("period must be >= 1")
    return _continue(_family(family), z0, 0, p, path, samples)


def classify_point(f: RationalMap, z, max_pre: int = 8, max_period: int = 8, tol: float = 1e-9):
    """Smallest (preperiod, period) with f^(l+p)(z) = f^l(z) within tol (chordal)."""
    orbit = [SpherePoint.of(z)]
    for _ in range(max_pre + max_period):
        orbit.append(f(orbit[-1]))
    for l in range(max_pre + 1):
        for p in range(1, max_period + 1):
            if l + p < len(orbit) and chordal(orbit[l + p], orbit[l]) < tol:
                return l, p
    raise NotPeriodic(f"{SpherePoint.of(z).affine} is not (pre)periodic within the search bounds")


def track_hyperbolic_set(family, points, path, samples: int = 101, data=None) -> list[MotionTrack]:
    """Continue a finite set of repelling periodic and preperiodic points.

    ``data`` optionally gives (preperiod, period) per point; otherwise it is
    detected.  Preperiodic points solve f^(l+p)(x) = f^l(x), which keeps the
    conjugacy h(f(x)) = f(h(x)) on the set.  Raises NotPeriodic for points
    whose orbit passes through a critical point before landing.
    """
    fam = _family(family)
    a, _, _ = _path_points(fam, path, samples)
    f0 = fam.map_at(a)
    pts = [complex(SpherePoint.of(z).affine) for z in points]
    tracks = []
    for idx, z in enumerate(pts):
        pre, p = data[idx] if data is not None else classify_point(f0, z)
        _, D = _iterate_with_deriv(f0, z, pre)
        if abs(D) < 1e-10:
            raise NotPeriodic(f"orbit of {z} meets a critical point before landing")
        tracks.append(_continue(fam, z, pre, p, path, samples))
    return tracks


def semiconjugacy_residual(family, points, tracks: list[MotionTrack]) -> np.ndarray:
    """max over x with f(x) in the set of |f_t(h_t(x)) - h_t(f(x))|, per path sample."""
    fam = _family(family)
    f0 = fam.map_at(tracks[0].path[0])
    pts = [complex(SpherePoint.of(z).affine) for z in points]
    image_idx = []
    for x in pts:
        fx = complex(f0.affine(x))
        hit = [j for j, y in enumerate(pts) if abs(y - fx) <= 1e-9 * max(1.0, abs(fx))]
        image_idx.append(hit[0] if hit else None)
    out = np.zeros(len(tracks[0].path))
    for s, lam in enumerate(tracks[0].path):
        f = fam.map_at(lam)
        worst = 0.0
        for x_i, y_i in enumerate(image_idx):
            if y_i is None:
                continue
            worst = max(worst, abs(complex(f.affine(tracks[x_i].points[s])) - tracks[y_i].points[s]))
        out[s] = worst
    return out


# --------------------------------------------------------------------------
# Misiurewicz certificates

@dataclass(frozen=True)
class MisiurewiczCertificate:
    """Per critical point: preperiod, period, cycle multiplier and landing distance."""

    entries: tuple

    def to_dict(self):
        out = []
        for e in self.entries:
            d = dict(e)
            d["cycleMultiplier"] = [e["cycleMultiplier"].real, e["cycleMultiplier"].imag]
            d["cyclePoint"] = [e["cyclePoint"].real, e["cyclePoint"].imag]
            out.append(d)
        return {"entries": out}


def _polish_cycle(f: RationalMap, z: complex, p: int):
    z, ok = _newton(f, z, 0, p, iters=60, tol=1e-15)
    r, _, mult = _residual(f, z, 0, p)
    return z, abs(r), mult


def detect_misiurewicz(f: RationalMap, Nmax: int = 200, tol: float = 1e-6,
                       max_period: int = 64) -> MisiurewiczCertificate:
    """Certify that every critical point lands on a repelling cycle.

    Critical points of polynomials at infinity are skipped.  The first close
    return d(f^n c, f^(n-p) c) < tol (smallest p) is Newton-polished to a
    p-cycle with residual <= 1e-12; the preperiod is the first l with
    d(f^l c, cycle) < tol.  Raises NoCertificate if some critical orbit has no
    such return within Nmax or lands on a non-repelling cycle.
    """
    from .conditions import dynamical_critical_points
    if Nmax < 2:
        raise ValidationError("Nmax must be >= 2")
    entries = []
    for idx, c in dynamical_critical_points(f):
        orbit = [c]
        found = None
        for n in range(1, Nmax + 1):
            orbit.append(f(orbit[-1]))
            for p in range(1, min(n, max_period) + 1):
                if chordal(orbit[n], orbit[n - p]) < tol:
                    found = (n, p)
                    break
            if found:
                break
        if not found:
            raise NoCertificate(f"critical point {idx}: no periodic landing detected within {Nmax} steps")
        n, p = found
        y = orbit[n - p]
        if y.is_infinity:
            raise NoCertificate(f"critical point {idx} lands at infinity")
        z, res, mult = _polish_cycle(f, y.affine, p)
        if res > 1e-12 * max(1.0, abs(z)):
            raise NoCertificate(f"critical point {idx}: cycle polish did not converge (residual {res:.3g})")
        if abs(mult) <= 1:
            raise NoCertificate(f"critical point {idx}: landing cycle has multiplier {abs(mult):.6g} <= 1")
        cycle = [SpherePoint.of(z)]
        for _ in range(p - 1):
            cycle.append(f(cycle[-1]))
        dist = [min(chordal(q, cp) for cp in cycle) for q in orbit]
        pre = next(l for l, dd in enumerate(dist) if dd < tol)
        entries.append({"criticalIndex": idx, "criticalPoint": None if c.is_infinity else [c.affine.real, c.affine.imag],
                        "preperiod": pre, "period": p, "cycleMultiplier": complex(mult),
                        "landingDistance": float(dist[pre]), "cyclePoint": complex(z)})
    for e in entries:
        if e["criticalPoint"] is None:
            e["criticalPoint"] = "inf"
    return MisiurewiczCertificate(tuple(entries))


# --------------------------------------------------------------------------
# direction sets

@dataclass(frozen=True)
class DirectionSet:
    u: np.ndarray  # rows u_j
    uMixed: np.ndarray
    M: float
    tauMatrix: np.ndarray

    def to_dict(self):
        c = lambda v: [[z.real, z.imag] for z in v]
        return {"u": [c(r) for r in self.u], "uMixed": c(self.uMixed), "M": self.M}


def direction_set(forms) -> DirectionSet:
    """Unit vectors u_j with tau_i(u_j) = 0 for i != j, their normalized sum and
    M = 1 + max_i max(|tau_i(uMixed)|, |tau_i(uMixed)|^-1)."""
    T = np.array([np.asarray(getattr(f, "components", f), complex).ravel() for f in forms])
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise DegenerateTransversality("need as many forms as parameter dimensions")
    sv = np.linalg.svd(T, compute_uv=False)
    if sv.min() <= 1e-8:
        raise DegenerateTransversality(f"smallest singular value {sv.min():.3g} of the tau-matrix")
    inv = np.linalg.inv(T)
    U = (inv / np.linalg.norm(inv, axis=0)[None, :]).T
    mixed = U.sum(0)
    mixed = mixed / np.linalg.norm(mixed)
    vals = np.abs(T @ mixed)
    with np.errstate(divide="ignore"):
        M = 1 + float(np.max(np.maximum(vals, 1 / vals)))
    return DirectionSet(U, mixed, M, T)


# --------------------------------------------------------------------------
# large scale probe

@dataclass(frozen=True)
class LargeScaleProbe:
    entries: tuple
    C: float
    l1: float
    M: float
    rho: float
    kappa: float
    samples: dict = field(default_factory=dict)

    @property
    def admissible(self) -> list:
        return [e["n"] for e in self.entries]

    def to_dict(self):
        return {"entries": list(self.entries), "C": self.C, "l1": self.l1, "M": self.M, "rho": self.rho,
                "kappa": self.kappa}


def default_budget(f: RationalMap, kappa: float, M: float, eta: float = 0.1, N: int = 30):
    """Expansion budget from fitted CE, CE2 and Mane constants of f."""
    from .conditions import fit_ce2_constants, fit_ce_constants
    from .distortion import expansion_budget, mane_constants
    gamma, gamma0 = fit_ce_constants(f, N)
    mu, mu0 = fit_ce2_constants(f, min(N, 14))
    gp, gp0 = mane_constants(f, eta, N)
    return expansion_budget(gamma, gamma0, mu, mu0, kappa, max(gp, 0.0), gp0, M, eta)


def _ray_covering_radius(curve: np.ndarray, rays: int = 64) -> float:
    """Distance from 0 to the closed polygon along ``rays`` directions (min over rays).

    Returns 0 unless the polygon winds around 0.
    """
    from .distortion import _winding
    if not np.all(np.isfinite(curve)) or round(_winding(curve)) == 0:
        return 0.0
    a = curve
    b = np.roll(curve, -1)
    best = math.inf
    for th in 2 * np.pi * np.arange(rays) / rays:
        d = complex(math.cos(th), math.sin(th))
        # solve s d = a + w (b - a), s >= 0, 0 <= w <= 1
        e = b - a
        den = (d.real * -e.imag) - (d.imag * -e.real)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (a.real * -e.imag - a.imag * -e.real) / den
            w = (d.real * a.imag - d.imag * a.real) / den
        ok = np.isfinite(s) & (s >= 0) & (w >= 0) & (w <= 1)
        if ok.any():
            best = min(best, float(s[ok].min()))
    return best if math.isfinite(best) else 0.0


def large_scale_probe(family, lambda0, nRange=(5, 15), gridRes: int = 9, kappa: float | None = None,
                      budget=None, M: float | None = None, boundary: int = 256,
                      kappa_radius: float = 0.0) -> LargeScaleProbe:
    """Probe of phi_n(lambda) = xi_n(lambda0 + r_n lambda) - xi_n(lambda0) for n in (n0, n1].

    phi_n is read in the unitary chart centred at xi_n(lambda0), scaled to
    chordal units, so phi_n(0) = 0 exactly.  r_n = a+(v, n)/l1.  Admissible
    times are those with |(f^n)'(v)| a+(v, n) > rho.  For each: the product
    r_n |(f^n)'(v)| against [1/C, C] with C = e^2 l1 M / rho, the covering
    radius of phi_n on the unit disk (ray casting plus winding, one line
    t u_j per critical point when k > 1) and the smallest singular value of
    the finite-difference differential of phi_n at 0.
    """
    from .conditions import dynamical_critical_points
    from .distortion import a_plus, apd_product, estimate_kappa
    fam = _family(family)
    lam0 = fam.param(lambda0)
    f = fam.map_at(lam0)
    k = fam.paramDim
    dyn = [i for i, _ in dynamical_critical_points(f)]
    if len(dyn) != k:
        raise ValidationError(f"probe needs {k} dynamical critical points, found {len(dyn)}")
    tracks = marked_critical_points(fam, lam0)
    if kappa is None:
        kappa = estimate_kappa(fam, lam0, kappa_radius).kappa
    if M is None:
        forms = [tau_form(fam, i, lam0) for i in dyn]
        dirs = direction_set(forms)
        M = dirs.M
        U = dirs.u
    else:
        U = np.eye(k, dtype=complex)
    if budget is None:
        budget = default_budget(f, kappa, M)
    rho = budget.rho if budget.rho is not None else 0.0
    l1 = 11 * math.e * kappa * M
    C = math.exp(2) * l1 * M / rho if rho > 0 else math.inf
    n0, n1 = nRange
    entries, samples = [], {}
    th = np.exp(2j * np.pi * np.arange(boundary) / boundary)
    g = np.linspace(-1, 1, gridRes)
    grid = (g[None, :] + 1j * g[:, None]).ravel()
    grid = grid[np.abs(grid) <= 1]
    for n in range(n0 + 1, n1 + 1):
        row = {"n": n, "perCritical": []}
        cover, vert = [], []
        for slot, i in enumerate(dyn):
            v = tracks[i].v(lam0)
            prod = apd_product(f, v, n, kappa)
            if not prod > rho:
                row = None
                break
            r = a_plus(f, v, n, kappa) / l1
            _, cum = _deriv_log(f, v, n)
            u = U[slot]
            pts = np.concatenate(([0j], th, grid, [1e-4, -1e-4, 1e-4j, -1e-4j]))
            phi = _phi_values(fam, tracks[i], lam0, r * pts[:, None] * u[None, :], n)
            # Jacobian by central differences (complex derivative along u)
            jac = (phi[-4] - phi[-3]) / (2e-4)
            cover.append(_ray_covering_radius(phi[1: 1 + boundary]))
            vert.append(abs(jac))
            samples[(n, i)] = phi[1 + boundary: 1 + boundary + grid.size]
            row["perCritical"].append({"i": i, "r": r, "product": r * math.exp(cum),
                                       "apdProduct": prod})
        if row is None:
            continue
        if k > 1:
            J = np.array(vert)
            row["verticalityMargin"] = float(J.min())
        else:
            row["verticalityMargin"] = float(vert[0])
        row["coveringRadius"] = float(min(cover))
        row["productWithinC"] = all(1 / C <= pc["product"] <= C for pc in row["perCritical"])
        entries.append(row)
    if not entries:
        raise NoAdmissibleTimes("no admissible time in the requested range")
    return LargeScaleProbe(tuple(entries), C, l1, M, rho, kappa, samples)


def _deriv_log(f, v, n):
    from .distortion import _orbit_logs
    cum, _ = _orbit_logs(f, v, n, "chordal")
    return None, float(cum[n])


def _taylor(coef, s):
    """Taylor coefficients at s of the polynomial with ascending coefficients coef."""
    out, c = [], np.asarray(coef, complex)
    for k in range(len(c)):
        out.append(np.polynomial.polynomial.polyval(s, c) / math.factorial(k))
        c = np.polynomial.polynomial.polyder(c)
    return np.array(out)


def _chart_polys(num, den, inv_in, inv_out):
    N, D = (num[..., ::-1], den[..., ::-1]) if inv_in else (num, den)
    return (D, N) if inv_out else (N, D)


def _diff_step(num, den, dnum, dden, s, inv_in, delta, dlam):
    """One step of the orbit difference f_lambda(s + delta) - f_lambda0(s).

    The base point s lives in the chart z (or 1/z when inv_in); the image
    chart is the one where the base image has modulus <= 1.  Expanding in
    Taylor coefficients keeps delta accurate at any scale.
    """
    N0, D0 = _chart_polys(num, den, inv_in, False)
    val = np.polynomial.polynomial.polyval(s, N0) / np.polynomial.polynomial.polyval(s, D0)
    inv_out = not (np.isfinite(val) and abs(val) <= 1)
    N0, D0 = _chart_polys(num, den, inv_in, inv_out)
    dN, dD = _chart_polys(dlam @ dnum, dlam @ dden, inv_in, inv_out)
    Nt, Dt = _taylor(N0, s), _taylor(D0, s)
    powers = delta[:, None] ** np.arange(len(Nt))[None, :]
    base = (powers[:, 1:] * (Nt[1:] * Dt[0] - Nt[0] * Dt[1:])[None, :]).sum(1)
    sd = s + delta
    pv = np.polynomial.polynomial.polyval
    dNv = np.array([pv(x, c) for x, c in zip(sd, dN)])
    dDv = np.array([pv(x, c) for x, c in zip(sd, dD)])
    top = base + dNv * Dt[0] - Nt[0] * dDv
    Dsd = (powers * Dt[None, :]).sum(1) + dDv
    s_out = Nt[0] / Dt[0]
    return s_out, inv_out, top / (Dsd * Dt[0])


def _phi_values(fam: Family, track, lam0, dlams, n):
    """phi_n at lambda0 + dlams (rows), in the chordal-scaled unitary chart at xi_n(lambda0)."""
    num, den, dnum, dden = fam.jet(lam0)
    c = track.c0
    inv = c.is_infinity or abs(c.affine) > 1
    s = (1 / c.affine if not c.is_infinity else 0j) if inv else c.affine
    if track.constant:
        delta = np.zeros(len(dlams), complex)
    else:
        h = 1e-6 * max(1.0, float(np.abs(lam0).max()))
        grad = []
        for e in np.eye(fam.paramDim):
            pts = [track.c(lam0 + sg * h * e) for sg in (1, -1)]
            a = [(1 / p.affine if not p.is_infinity else 0j) if inv else p.affine for p in pts]
            grad.append((a[0] - a[1]) / (2 * h))
        delta = dlams @ np.array(grad)
    for _ in range(n + 1):
        s, inv, delta = _diff_step(num, den, dnum, dden, s, inv, delta, dlams)
        if not np.all(np.isfinite(delta)):
            raise CriticalCollision("orbit difference left the chart on the probe disk")
    return 2 * delta / (1 + np.conj(s) * (s + delta))
