"""Holomorphic families, marked critical points, the critical-orbit maps
xi_n^i(lambda) = f_lambda^n(v_i(lambda)) with their parameter derivatives,
Lyapunov slices, bifurcation densities and activity indicators.

Parameter derivatives are propagated on the homogeneous lift: with
X_{n+1} = F(X_n) and Xdot_{n+1} = DF(X_n) Xdot_n + d_lambda F(X_n), the
tangent of xi_n is encoded by the wedge X_n ^ Xdot_n, which is unchanged by
rescaling the lift or adding radial components.  Both are renormalized at
every step (the size of Xdot kept as a separate log exponent), so long
orbits neither overflow nor depend on an affine chart.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (BadSpec, CriticalCollision, DegenerateMap, RatDynError,
                     RootFindingFailure, ValidationError)
from .expr import MapLiteral
from .sphere import (RationalMap, SpherePoint, chordal, make_rational_map,
                     wronskian_coefficients)

BUILTINS = ("quadratic", "unicritical", "cubic")


# --------------------------------------------------------------------------
# batched homogeneous algebra

def heval(coef, x, y):
    """sum_k coef[..., k] x^k y^(d-k), broadcasting over leading axes."""
    coef = np.asarray(coef)
    d = coef.shape[-1] - 1
    acc = coef[..., d] * np.ones_like(x)
    ypow = np.ones_like(y)
    for k in range(d - 1, -1, -1):
        ypow = ypow * y
        acc = acc * x + coef[..., k] * ypow
    return acc


def hdx(coef):
    coef = np.asarray(coef)
    d = coef.shape[-1] - 1
    return coef[..., 1:] * np.arange(1, d + 1)


def hdy(coef):
    coef = np.asarray(coef)
    d = coef.shape[-1] - 1
    return coef[..., :-1] * np.arange(d, 0, -1)


def wedge(A, B):
    return A[..., 0] * B[..., 1] - A[..., 1] * B[..., 0]


def _normalize_rows(X):
    n = np.sqrt(np.abs(X[..., 0]) ** 2 + np.abs(X[..., 1]) ** 2)
    return X / n[..., None], n


def _drop_radial(W, X):
    # X has unit norm; remove the component along X
    proj = np.conj(X[..., 0]) * W[..., 0] + np.conj(X[..., 1]) * W[..., 1]
    return W - proj[..., None] * X


def _renorm_tangent(W, L):
    n = np.sqrt(np.abs(W[..., 0]) ** 2 + np.abs(W[..., 1]) ** 2)
    ok = n > 0
    safe = np.where(ok, n, 1.0)
    return W / safe[..., None], np.where(ok, L + np.log(safe), L)


# --------------------------------------------------------------------------
# families

def _as_param(lam, k):
    a = np.atleast_1d(np.asarray(lam, dtype=complex)).ravel()
    if a.size != k:
        raise ValidationError(f"parameter must have {k} complex components, got {a.size}")
    return a


@dataclass(frozen=True, eq=False)
class Family:
    """lambda -> f_lambda with raw coefficient maps and their lambda-derivatives.

    ``coeffs(lam)`` returns ascending (num, den); ``dcoeffs(lam)`` returns
    arrays of shape (k, d+1) with d/d lambda_k of the coefficients.
    """

    name: str
    paramDim: int
    degree: int
    kind: str
    coeffs: Callable
    dcoeffs: Callable
    finiteDifference: bool = False
    spec: dict = field(default_factory=dict)
    center: tuple = ()
    affine: tuple | None = None  # (num0, den0, dnum, dden) for coefficient-affine families

    def param(self, lam) -> np.ndarray:
        return _as_param(lam, self.paramDim)

    def map_at(self, lam) -> RationalMap:
        return make_rational_map(*self.coeffs(self.param(lam)))

    def jet(self, lam):
        """(num, den, dnum, dden) scaled by one common factor (max coefficient modulus)."""
        lam = self.param(lam)
        num, den = (np.asarray(a, dtype=complex) for a in self.coeffs(lam))
        dnum, dden = (np.asarray(a, dtype=complex) for a in self.dcoeffs(lam))
        s = max(np.abs(num).max(), np.abs(den).max())
        if s == 0:
            raise DegenerateMap("all coefficients vanish")
        return num / s, den / s, dnum / s, dden / s

    def coeffs_batch(self, lams):
        """Coefficient arrays for many parameters at once, shape (M, d+1)."""
        lams = np.asarray(lams, dtype=complex).reshape(-1, self.paramDim)
        if self.affine is not None:
            n0, d0, dn, dd = self.affine
            return n0 + lams @ dn, d0 + lams @ dd, np.broadcast_to(dn, (len(lams),) + dn.shape), \
                np.broadcast_to(dd, (len(lams),) + dd.shape)
        nums, dens, dnums, ddens = [], [], [], []
        for lam in lams:
            n, d = self.coeffs(lam)
            a, b = self.dcoeffs(lam)
            nums.append(n), dens.append(d), dnums.append(a), ddens.append(b)
        return np.array(nums), np.array(dens), np.array(dnums), np.array(ddens)

    def eval(self, lam, p) -> SpherePoint:
        return self.map_at(lam)(p)

    def dParam(self, lam, p, u=None) -> complex:
        """d f_lambda(z) / d lambda . u at finite z with finite image (affine chart)."""
        num, den, dnum, dden = self.jet(lam)
        u = self._direction(u)
        z = SpherePoint.of(p).affine
        N, D = np.polyval(num[::-1], z), np.polyval(den[::-1], z)
        dN = np.polyval((u @ dnum)[::-1], z)
        dD = np.polyval((u @ dden)[::-1], z)
        return complex((dN * D - N * dD) / (D * D))

    def dPhase(self, lam, p) -> float:
        from .sphere import spherical_derivative
        return spherical_derivative(self.map_at(lam), p)

    def _direction(self, u):
        if u is None:
            if self.paramDim != 1:
                raise ValidationError("a direction u is required for multi-parameter families")
            return np.ones(1, dtype=complex)
        return _as_param(u, self.paramDim)

    def describe(self) -> dict:
        return {"name": self.name, "kind": self.kind, "paramDim": self.paramDim,
                "degree": self.degree, "finiteDifference": self.finiteDifference}


def _affine_family(name, kind, num0, den0, dnum, dden, spec, center):
    num0, den0 = np.asarray(num0, complex), np.asarray(den0, complex)
    dnum, dden = np.atleast_2d(np.asarray(dnum, complex)), np.atleast_2d(np.asarray(dden, complex))
    n = max(num0.size, den0.size, dnum.shape[1], dden.shape[1])
    pad = lambda a: np.pad(a, [(0, 0)] * (a.ndim - 1) + [(0, n - a.shape[-1])])
    num0, den0, dnum, dden = pad(num0), pad(den0), pad(dnum), pad(dden)
    k = dnum.shape[0]
    if dden.shape[0] != k:
        raise BadSpec("numerator and denominator need the same number of parameter directions")
    for a in (num0, den0, dnum, dden):
        a.setflags(write=False)

    def coeffs(lam):
        return num0 + lam @ dnum, den0 + lam @ dden

    def dcoeffs(lam):
        return dnum, dden

    return Family(name, k, n - 1, kind, coeffs, dcoeffs, False, spec,
                  tuple(center) if center is not None else (0j,) * k,
                  (num0, den0, dnum, dden))


def _composite_family(name, fn, k, d, spec, center, rel_step=1e-6):
    def dcoeffs(lam):
        rows_n, rows_d = [], []
        for j in range(k):
            h = rel_step * max(1.0, abs(lam[j]))
            e = np.zeros(k, dtype=complex)
            e[j] = h
            np_, dp = fn(lam + e)
            nm, dm = fn(lam - e)
            rows_n.append((np.asarray(np_) - np.asarray(nm)) / (2 * h))
            rows_d.append((np.asarray(dp) - np.asarray(dm)) / (2 * h))
        return np.array(rows_n), np.array(rows_d)

    def coeffs(lam):
        n, dd = fn(lam)
        return np.asarray(n, complex), np.asarray(dd, complex)

    return Family(name, k, d, "composite", coeffs, dcoeffs, True, spec,
                  tuple(center) if center is not None else (0j,) * k)


def _literal_family(text, params, center, spec):
    lit = MapLiteral(text, params)
    k = len(params)
    if k == 0:
        raise BadSpec("a family literal needs at least one parameter name")

    def fn(lam):
        return lit.evaluate(**dict(zip(params, lam)))

    base = fn(np.zeros(k, complex))
    n = len(base[0])
    dn, dd = [], []
    for j in range(k):
        e = np.zeros(k, complex)
        e[j] = 1
        a = fn(e)
        m = max(n, len(a[0]))
        dn.append(np.pad(a[0], (0, m - len(a[0]))) - np.pad(base[0], (0, m - n)))
        dd.append(np.pad(a[1], (0, m - len(a[1]))) - np.pad(base[1], (0, m - n)))
    m = max(len(r) for r in dn) if dn else n
    fam = _affine_family(text, "affine", base[0], base[1], [np.pad(r, (0, m - len(r))) for r in dn],
                         [np.pad(r, (0, m - len(r))) for r in dd], spec, center)
    # accept the exact affine form only if it reproduces the literal at a random point
    probe = np.random.default_rng(12345).normal(size=(k, 2)) @ np.array([1, 1j])
    a, b = fn(probe)
    an, bn = fam.coeffs(probe)
    scale = 1 + np.abs(an).max() + np.abs(bn).max()
    L = len(an)
    a, b = np.pad(a, (0, max(0, L - len(a))))[:L], np.pad(b, (0, max(0, L - len(b))))[:L]
    if max(np.abs(a - an).max(), np.abs(b - bn).max()) <= 1e-12 * scale:
        return fam
    d = max(len(fn(probe)[0]), n) - 1

    def padded(lam):
        x, y = fn(lam)
        return np.pad(x, (0, d + 1 - len(x))), np.pad(y, (0, d + 1 - len(y)))

    return _composite_family(text, padded, k, d, spec, center)


def _literal_params(text):
    import ast
    from .expr import _to_python
    try:
        tree = ast.parse(_to_python(text), mode="eval")
    except SyntaxError as exc:
        raise BadSpec(f"cannot parse family literal {text!r}: {exc.msg}") from None
    names = {n.id for n in ast.walk(tree) if isinstance(n, ast.Name)}
    return sorted(names - {"z"})


def make_family(spec, center=None, check_radius: float | None = None) -> Family:
    """Build a family from a spec.

    Accepted specs: ``"quadratic"`` (z^2 + c), ``"unicritical:d"`` (z^d + c),
    ``"cubic"`` (z^3 + a z + b), a literal such as ``"z^2 + c"`` whose free
    names (other than z) become parameters in alphabetical order, or a dict
    with ``kind`` in {"affine", "literal", "composite"}.  Raises BadSpec for
    unknown names, degree below 2, or a map that is degenerate at every
    probed parameter.
    """
    if isinstance(spec, Family):
        return spec
    echo = spec if isinstance(spec, dict) else {"family": spec}
    if isinstance(spec, str):
        s = spec.strip()
        head, _, arg = s.partition(":")
        if head == "quadratic" and not arg:
            fam = _affine_family("quadratic", "quadratic", [0, 0, 1], [1], [[1, 0, 0]], [[0, 0, 0]], echo, center)
        elif head == "unicritical":
            try:
                d = int(arg) if arg else 2
            except ValueError:
                raise BadSpec(f"bad degree in {spec!r}") from None
            if d < 2:
                raise BadSpec("unicritical degree must be >= 2")
            base = np.zeros(d + 1)
            base[d] = 1
            dn = np.zeros((1, d + 1))
            dn[0, 0] = 1
            fam = _affine_family(f"unicritical:{d}", "unicritical", base, [1], dn, np.zeros((1, d + 1)), echo, center)
        elif head == "cubic" and not arg:
            fam = _affine_family("cubic", "cubic", [0, 0, 0, 1], [1], [[0, 1, 0, 0], [1, 0, 0, 0]],
                                 np.zeros((2, 4)), echo, center if center is not None else (-3.0, 0.0))
        else:
            params = _literal_params(s)
            fam = _literal_family(s, params, center, echo)
    elif isinstance(spec, dict):
        kind = spec.get("kind")
        if kind == "affine":
            num, den = spec.get("num"), spec.get("den")
            if num is None or den is None or len(num) < 2:
                raise BadSpec("affine spec needs 'num' and 'den' lists [base, direction, ...]")
            fam = _affine_family(spec.get("name", "affine"), "affine", num[0], den[0], num[1:], den[1:],
                                 echo, spec.get("center", center))
        elif kind == "literal":
            params = spec.get("params") or _literal_params(spec["expr"])
            fam = _literal_family(spec["expr"], list(params), spec.get("center", center), echo)
        elif kind == "composite":
            fn, k = spec.get("coeffs"), spec.get("paramDim")
            if not callable(fn) or not k:
                raise BadSpec("composite spec needs a callable 'coeffs' and 'paramDim'")
            c0 = np.asarray(spec.get("center", center) or (0j,) * k, complex)
            d = len(fn(c0)[0]) - 1
            fam = _composite_family(spec.get("name", "composite"), fn, int(k), d,
                                    {"kind": "composite", "name": spec.get("name", "composite")}, c0)
        elif kind in BUILTINS:
            name = kind if kind != "unicritical" else f"unicritical:{spec.get('degree', 2)}"
            return make_family(name, spec.get("center", center), check_radius)
        else:
            raise BadSpec(f"unknown family kind {kind!r}")
    else:
        raise BadSpec(f"cannot build a family from {type(spec).__name__}")
    if fam.degree < 2:
        raise BadSpec("family degree must be >= 2")
    _check_nondegenerate(fam, check_radius)
    return fam


def _check_nondegenerate(fam: Family, radius):
    c = np.asarray(fam.center, complex)
    probes = [c]
    rng = np.random.default_rng(7)
    r = radius if radius is not None else 0.1
    for _ in range(8):
        probes.append(c + r * (rng.normal(size=fam.paramDim) + 1j * rng.normal(size=fam.paramDim)))
    for lam in probes:
        try:
            fam.map_at(lam)
            return
        except (DegenerateMap, ValidationError):
            continue
    raise BadSpec(f"family {fam.name!r} is degenerate at every probed parameter")


# --------------------------------------------------------------------------
# marked critical points

def _chart_newton(coef, t, iters=60):
    dcoef = coef[1:] * np.arange(1, len(coef))
    for _ in range(iters):
        fv = np.polyval(coef[::-1], t)
        dv = np.polyval(dcoef[::-1], t)
        if fv == 0:
            return t, True
        if dv == 0:
            return t, False
        step = fv / dv
        t = t - step
        if abs(step) <= 1e-15 * max(1.0, abs(t)):
            return t, True
    return t, abs(step) <= 1e-10 * max(1.0, abs(t))


def _newton_critical(J, p: SpherePoint) -> SpherePoint | None:
    if p.is_infinity or abs(p.z) > abs(p.w):
        s = p.w / p.z
        s, ok = _chart_newton(J[::-1], s)
        return SpherePoint(1.0 + 0j, complex(s)) if ok else None
    t = p.z / p.w
    t, ok = _chart_newton(J, t)
    return SpherePoint(complex(t), 1.0 + 0j) if ok else None


@dataclass(frozen=True, eq=False)
class CriticalTrack:
    """Critical point c_i(lambda) continued by Newton on the Wronskian from lambda0."""

    family: Family
    index: int
    lambda0: np.ndarray
    c0: SpherePoint
    multiplicity: int = 1
    constant: bool = False

    def c(self, lam, steps: int = 8) -> SpherePoint:
        lam = self.family.param(lam)
        if self.constant or np.array_equal(lam, self.lambda0):
            return self.c0
        p = self.c0
        t, h = 0.0, 1.0 / steps
        while t < 1.0:
            h = min(h, 1.0 - t)
            mid = self.lambda0 + (t + h) * (lam - self.lambda0)
            num, den, _, _ = self.family.jet(mid)
            q = _newton_critical(wronskian_coefficients(num, den), p)
            if q is None or chordal(p, q) > 0.1:
                h /= 2
                if h < 1e-12:
                    raise RootFindingFailure(f"critical point {self.index} lost along the continuation path")
                continue
            p, t = q, t + h
        return p

    def v(self, lam) -> SpherePoint:
        return self.family.map_at(lam)(self.c(lam))


def _polynomial_at_infinity(fam: Family) -> bool:
    if fam.affine is None:
        return False
    _, den0, _, dden = fam.affine
    return bool(np.all(den0[1:] == 0) and np.all(dden == 0))


def marked_critical_points(family: Family, lambda0=None) -> list[CriticalTrack]:
    """Critical tracks from lambda0 in the order of ``f_lambda0.critical``.

    Finite critical points must be simple and pairwise farther than 1e-6
    (else CriticalCollision).  For polynomial families the point at infinity
    is a constant track carrying multiplicity d - 1.
    """
    lam0 = family.param(family.center if lambda0 is None else lambda0)
    f = family.map_at(lam0)
    poly_inf = _polynomial_at_infinity(family)
    tracks = []
    pts = list(f.critical)
    for i, (c, m) in enumerate(pts):
        const = c.is_infinity and poly_inf
        if m > 1 and not const:
            raise CriticalCollision(f"critical point {c.affine} has multiplicity {m}")
        tracks.append(CriticalTrack(family, i, lam0, c, m, const))
    for a in range(len(pts)):
        for b in range(a + 1, len(pts)):
            if chordal(pts[a][0], pts[b][0]) <= 1e-6:
                raise CriticalCollision("critical points are not simple")
    return tracks


# the maps xi_n and their derivatives

def _hom_point(p: SpherePoint):
    X = np.array([p.z, p.w], dtype=complex)
    return X / np.linalg.norm(X)


class _Propagator:
    """Batched homogeneous orbit of critical values with tangent data.

    Arrays have a leading batch axis of size M.  State: unit lift X, the
    parameter tangent Xdot = e^LW * W and the phase tangent V = e^LV * V,
    both kept orthogonal to X.  V starts as the unit tangent at v in the
    plane chart (inverse chart when v is far out), so that
    (X ^ V)/(X0 ^ V0) gives (f^n)'(v) and (X ^ Xdot)/(X ^ V) the ratio
    xi_n' / (f^n)'(v).
    """

    def __init__(self, num, den, dn, dd, C):
        self.num, self.den, self.dn, self.dd = num, den, dn, dd
        self.Px, self.Py = hdx(num), hdy(num)
        self.Qx, self.Qy = hdx(den), hdy(den)
        FX, G, s = self._apply(C)
        X = FX / s[:, None]
        self.X = X
        self.W, self.LW = _renorm_tangent(_drop_radial(G / s[:, None], X), np.zeros(len(X)))
        finite = np.abs(X[:, 1]) >= 1e-8 * np.abs(X[:, 0])
        self.finite = finite
        V = np.where(finite[:, None], np.stack([X[:, 1], 0 * X[:, 1]], -1), np.stack([0 * X[:, 0], X[:, 0]], -1))
        self.wv0 = wedge(X, V)  # -X1^2 (or X0^2): fixes the unit tangent at v
        self.V, self.LV = _renorm_tangent(_drop_radial(V, X), np.zeros(len(X)))
        self.sum = np.zeros(len(X), dtype=complex)
        self.lastTerm = np.zeros(len(X), dtype=complex)
        self.lastEta = np.zeros(len(X))

    def _apply(self, X):
        x, y = X[:, 0], X[:, 1]
        FX = np.stack([heval(self.num, x, y), heval(self.den, x, y)], -1)
        G = np.stack([heval(self.dn, x, y), heval(self.dd, x, y)], -1)
        s = np.sqrt(np.abs(FX[:, 0]) ** 2 + np.abs(FX[:, 1]) ** 2)
        return FX, G, s

    def _DF(self, X, W):
        x, y = X[:, 0], X[:, 1]
        return np.stack([heval(self.Px, x, y) * W[:, 0] + heval(self.Py, x, y) * W[:, 1],
                         heval(self.Qx, x, y) * W[:, 0] + heval(self.Qy, x, y) * W[:, 1]], -1)

    def step(self):
        X = self.X
        FX, G, s = self._apply(X)
        s = s[:, None]
        Xn = FX / s
        with np.errstate(over="ignore", invalid="ignore"):
            Wn = (self._DF(X, self.W) + np.exp(np.minimum(-self.LW, 700.0))[:, None] * G) / s
        Vn = self._DF(X, self.V) / s
        self.W, self.LW = _renorm_tangent(_drop_radial(Wn, Xn), self.LW)
        self.V, self.LV = _renorm_tangent(_drop_radial(Vn, Xn), self.LV)
        lam = wedge(Xn, G / s)
        wv = wedge(Xn, self.V)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            term = lam / wv * np.exp(-self.LV)
        self.lastTerm = term
        self.lastEta = 2 * np.abs(lam)
        with np.errstate(invalid="ignore"):
            self.sum = self.sum + term
        self.X = Xn

    # read-outs
    def ratio(self):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return np.exp(self.LW - self.LV) * wedge(self.X, self.W) / wedge(self.X, self.V)

    def log_fprime_sph(self):
        """log of the spherical derivative of f^n at v."""
        with np.errstate(divide="ignore"):
            return self.LV + np.log(np.abs(wedge(self.X, self.V))) - np.log(np.abs(self.wv0))

    def xi_prime(self):
        X = self.X
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return -np.exp(self.LW) * wedge(X, self.W) / X[:, 1] ** 2

    def log_xi_speed(self):
        """log of the chordal speed 2|X ^ Xdot| of xi_n."""
        with np.errstate(divide="ignore"):
            return self.LW + np.log(2 * np.abs(wedge(self.X, self.W)))


@dataclass(frozen=True)
class CriticalJet:
    """The critical-value orbit xi_j = f^j(v), j = 0..n, with parameter data.

    ``xiPrime[j]`` is d xi_j/d lambda . u in the plane chart; ``ratio[j]`` is
    xi_j' / (f^j)'(v), a tangent at v in ``chart`` ("plane" unless v is far
    out); ``series[j]`` is the pullback term eta(xi_j)/(f^j)'(v) with
    eta = (d f/d lambda . u)/f', so ratio[j+1] = ratio[j] + series[j];
    ``logDeriv[j]`` is log|(f^j)'(v)| in the chordal metric and
    ``etaSph[j]`` the chordal size of d f/d lambda . u at xi_j.
    """

    points: tuple
    xiPrime: np.ndarray
    logXiSpeed: np.ndarray
    ratio: np.ndarray
    series: np.ndarray
    logDeriv: np.ndarray
    etaSph: np.ndarray
    chart: str

    @property
    def seed(self) -> complex:
        return complex(self.ratio[0])


def critical_jet(family: Family, track: CriticalTrack, lam, n: int, u=None) -> CriticalJet:
    """Propagate xi_j and its directional parameter derivative for j = 0..n."""
    if n < 0:
        raise ValidationError("n must be nonnegative")
    lam = family.param(lam)
    u = family._direction(u)
    num, den, dnum, dden = family.jet(lam)
    C = _hom_point(track.c(lam))[None, :]
    pr = _Propagator(num, den, u @ dnum, u @ dden, C)
    pts, xp, xs, ra, se, ld, eta = [], [], [], [], [], [], []

    def record():
        pts.append(SpherePoint(complex(pr.X[0, 0]), complex(pr.X[0, 1])))
        xp.append(complex(pr.xi_prime()[0]))
        xs.append(float(pr.log_xi_speed()[0]))
        ra.append(complex(pr.ratio()[0]))
        ld.append(float(pr.log_fprime_sph()[0]))

    record()
    for _ in range(n):
        pr.step()
        se.append(complex(pr.lastTerm[0]))
        eta.append(float(pr.lastEta[0]))
        record()
    return CriticalJet(tuple(pts), np.array(xp), np.array(xs), np.array(ra), np.array(se),
                       np.array(ld), np.array(eta), "plane" if pr.finite[0] else "inverse")


def xi(family: Family, i: int, n: int, lam, u=None, lambda0=None):
    """(xi_n^i(lambda), d xi_n^i/d lambda . u) with the derivative in the plane chart."""
    fam = make_family(family) if not isinstance(family, Family) else family
    tracks = marked_critical_points(fam, lam if lambda0 is None else lambda0)
    if not 0 <= i < len(tracks):
        raise ValidationError(f"critical index {i} out of range")
    jet = critical_jet(fam, tracks[i], lam, n, u)
    return jet.points[-1], complex(jet.xiPrime[-1])


# --------------------------------------------------------------------------
# slices

def _grid_axes(window, resolution):
    try:
        x0, x1, y0, y1 = (float(v) for v in window)
    except (TypeError, ValueError):
        raise ValidationError("window must be four numbers re0, re1, im0, im1") from None
    if not (x1 > x0 and y1 > y0) or not all(map(math.isfinite, (x0, x1, y0, y1))):
        raise ValidationError("window must have re0 < re1 and im0 < im1")
    if isinstance(resolution, (int, np.integer)):
        resolution = (int(resolution), int(resolution))
    nx, ny = (int(r) for r in resolution)
    if nx < 1 or ny < 1:
        raise ValidationError("resolution must be positive")
    # cell centres
    xs = x0 + (np.arange(nx) + 0.5) * (x1 - x0) / nx
    ys = y0 + (np.arange(ny) + 0.5) * (y1 - y0) / ny
    return (x0, x1, y0, y1), (nx, ny), xs, ys


def _slice_params(fam: Family, xs, ys, base, axis):
    k = fam.paramDim
    if k > 1 and base is None:
        raise ValidationError("multi-parameter families need a base point for the slice")
    b = np.zeros(k, complex) if base is None else fam.param(base)
    if not 0 <= axis < k:
        raise ValidationError("slice axis out of range")
    lams = np.repeat(b[None, :], len(xs) * len(ys), axis=0)
    C = (xs[None, :] + 1j * ys[:, None]).ravel()
    lams[:, axis] = C
    return lams


@dataclass(frozen=True)
class SliceGrid:
    window: tuple
    resolution: tuple
    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray  # shape (ny, nx); row j has imaginary part ys[j]
    stderr: np.ndarray
    holes: np.ndarray
    meta: dict

    @property
    def cellArea(self) -> float:
        x0, x1, y0, y1 = self.window
        return (x1 - x0) / self.resolution[0] * (y1 - y0) / self.resolution[1]

    def value_at(self, c) -> float:
        i = int(np.argmin(np.abs(self.xs - c.real)))
        j = int(np.argmin(np.abs(self.ys - c.imag)))
        return float(self.values[j, i])


def unicritical_levels(d: int) -> int:
    """Tree depth used by the compiled slice kernel: d^m <= 1024 leaves per group."""
    return int(math.floor(math.log(1024) / math.log(d) + 1e-12))


SLICE_ANCHOR = 0.3 + 0.2j


def lyapunov_slice(family, window, resolution, depth: int = 40, count: int = 5000, seed: int = 0,
                   tree_levels: int | None = None, anchor=None, base=None, axis: int = 0,
                   threads: int | None = None) -> SliceGrid:
    """Lyapunov estimates L(lambda) on a grid of cell centres.

    All cells share one random design (common random numbers), which keeps
    the grid smooth enough for a discrete Laplacian.  Unicritical families
    use a compiled kernel; others go through ``sample_equilibrium`` per cell.
    Cells where the map degenerates are holes (NaN).
    """
    from .ergodic import _check_sampling_args, stratified_layout
    fam = make_family(family) if not isinstance(family, Family) else family
    win, res, xs, ys = _grid_axes(window, resolution)
    _check_sampling_args(depth, count)
    nx, ny = res
    a = complex(SLICE_ANCHOR if anchor is None else SpherePoint.of(anchor).affine)
    meta = {"depth": depth, "count": count, "seed": seed, "anchor": [a.real, a.imag],
            "family": fam.describe()}
    values = np.full((ny, nx), np.nan)
    err = np.full((ny, nx), np.nan)
    if fam.kind in ("quadratic", "unicritical") and base is None and axis == 0:
        from . import _kernels
        d = fam.degree
        m = unicritical_levels(d) if tree_levels is None else tree_levels
        m = min(m, depth)
        _, prefix, masks = stratified_layout(count, d, m, depth, seed)
        if threads:
            import numba
            numba.set_num_threads(int(threads))
        _kernels.unicritical_slice(xs, ys, a.real, a.imag, d, prefix.astype(np.int64),
                                   masks.astype(np.int64), count, m, values, err)
        meta.update(method="compiled", treeLevels=m)
    else:
        from .ergodic import sample_equilibrium
        lams = _slice_params(fam, xs, ys, base, axis)
        m = 0 if tree_levels is None else tree_levels
        for idx, lam in enumerate(lams):
            j, i = divmod(idx, nx)
            try:
                f = fam.map_at(lam)
                s = sample_equilibrium(f, depth, count, seed, anchor=a, tree_levels=m,
                                       sort_branches=True, min_depth=1)
            except RatDynError:
                continue
            v = f.log_deriv_hom(s.points_x, s.points_y)
            v = v[np.isfinite(v)]
            if v.size:
                values[j, i] = v.mean()
                err[j, i] = v.std(ddof=1) / math.sqrt(v.size) if v.size > 1 else 0.0
        meta.update(method="generic", treeLevels=m)
    holes = ~np.isfinite(values)
    return SliceGrid(win, res, xs, ys, values, err, holes, meta)


# --------------------------------------------------------------------------
# density fields

@dataclass(frozen=True)
class DensityField:
    window: tuple
    resolution: tuple
    xs: np.ndarray
    ys: np.ndarray
    density: np.ndarray
    totalMass: float
    noiseFloor: float
    logDensity: np.ndarray | None = None
    holes: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def cellArea(self) -> float:
        x0, x1, y0, y1 = self.window
        return (x1 - x0) / self.resolution[0] * (y1 - y0) / self.resolution[1]


def _fill_holes(values):
    v = values.copy()
    holes = ~np.isfinite(v)
    if holes.all():
        raise ValidationError("slice has no finite cells")
    for _ in range(max(v.shape)):
        if not np.isfinite(v).all():
            p = np.pad(v, 1, constant_values=np.nan)
            nb = np.stack([p[:-2, 1:-1], p[2:, 1:-1], p[1:-1, :-2], p[1:-1, 2:]])
            with np.errstate(invalid="ignore"):
                cnt = np.isfinite(nb).sum(0)
                mean = np.where(cnt > 0, np.nansum(nb, 0) / np.maximum(cnt, 1), np.nan)
            fill = ~np.isfinite(v) & (cnt > 0)
            v[fill] = mean[fill]
        else:
            break
    return v, holes


def bifurcation_density(slice_: SliceGrid) -> DensityField:
    """5-point Laplacian of L divided by 2 pi (dd^c in the plane), negatives clipped.

    Holes are filled with neighbour means and flagged.  Border cells get 0.
    ``noiseFloor`` is 3 times the mean magnitude of the clipped negative
    values over the interior cells.
    """
    v, holes = _fill_holes(slice_.values)
    ny, nx = v.shape
    if nx < 3 or ny < 3:
        raise ValidationError("density needs at least 3 x 3 cells")
    x0, x1, y0, y1 = slice_.window
    hx, hy = (x1 - x0) / nx, (y1 - y0) / ny
    lap = np.zeros_like(v)
    lap[1:-1, 1:-1] = ((v[1:-1, 2:] - 2 * v[1:-1, 1:-1] + v[1:-1, :-2]) / hx ** 2
                       + (v[2:, 1:-1] - 2 * v[1:-1, 1:-1] + v[:-2, 1:-1]) / hy ** 2) / (2 * math.pi)
    inner = lap[1:-1, 1:-1]
    neg = np.where(inner < 0, -inner, 0.0)
    floor = 3.0 * float(neg.mean())
    dens = np.clip(lap, 0.0, None)
    mass = float(dens.sum() * hx * hy)
    return DensityField(slice_.window, slice_.resolution, slice_.xs, slice_.ys, dens, mass, floor,
                        None, holes, dict(slice_.meta, source="lyapunov_slice"))


@dataclass(frozen=True)
class WindowStats:
    cells: int
    meanDensity: float
    mass: float
    noiseFloor: float

    def to_dict(self):
        return {"cells": self.cells, "meanDensity": self.meanDensity, "mass": self.mass,
                "noiseFloor": self.noiseFloor}


def window_stats(field_: DensityField, mask_fn) -> WindowStats:
    """Statistics over interior cells whose centre c satisfies mask_fn(c)."""
    C = field_.xs[None, :] + 1j * field_.ys[:, None]
    mask = np.asarray(mask_fn(C), dtype=bool)
    mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = False
    n = int(mask.sum())
    if n == 0:
        raise ValidationError("no interior cells in the requested region")
    d = field_.density[mask]
    return WindowStats(n, float(d.mean()), float(d.sum() * field_.cellArea), field_.noiseFloor)


def activity_indicator(family, i: int, window, resolution, N: int, lambda0=None, base=None,
                       axis: int = 0, u=None) -> DensityField:
    """Density of d^-N (xi_N^i)^* omega_FS on a slice, per cell.

    omega_FS = |dz|^2 / (pi (1 + |z|^2)^2); the value is computed in log form
    (``logDensity``) and exponentiated, so large N does not overflow.  The
    critical point is continued to every cell by Newton on the Wronskian
    started from its position at lambda0 (the window centre by default).
    """
    fam = make_family(family) if not isinstance(family, Family) else family
    if N < 1:
        raise ValidationError("N must be >= 1")
    win, res, xs, ys = _grid_axes(window, resolution)
    nx, ny = res
    lams = _slice_params(fam, xs, ys, base, axis)
    if lambda0 is None:
        lam0 = lams[0].copy()
        lam0[axis] = complex((win[0] + win[1]) / 2, (win[2] + win[3]) / 2)
    else:
        lam0 = fam.param(lambda0)
    tracks = marked_critical_points(fam, lam0)
    if not 0 <= i < len(tracks):
        raise ValidationError(f"critical index {i} out of range")
    tr = tracks[i]
    num, den, dnum, dden = fam.coeffs_batch(lams)
    s = np.maximum(np.abs(num).max(1), np.abs(den).max(1))[:, None]
    num, den = num / s, den / s
    dirn = np.zeros(fam.paramDim, complex)
    dirn[axis] = 1
    if u is not None:
        dirn = fam.param(u)
    dn = np.einsum("k,mkd->md", dirn, dnum) / s
    dd = np.einsum("k,mkd->md", dirn, dden) / s
    C = _batched_critical(tr, num, den)
    ok = np.isfinite(C).all(1)
    C = np.where(ok[:, None], C, np.array([1.0, 0.0]))
    pr = _Propagator(num, den, dn, dd, C)
    for _ in range(N):
        pr.step()
    with np.errstate(divide="ignore", invalid="ignore"):
        logd = -N * math.log(fam.degree) + 2 * (pr.LW + np.log(np.abs(wedge(pr.X, pr.W)))) - math.log(math.pi)
    logd = np.where(ok, logd, np.nan).reshape(ny, nx)
    with np.errstate(over="ignore"):
        dens = np.exp(logd)
    holes = ~np.isfinite(logd)
    dens = np.where(holes, 0.0, dens)
    hx, hy = (win[1] - win[0]) / nx, (win[3] - win[2]) / ny
    mass = float(np.where(np.isfinite(dens), dens, 0).sum() * hx * hy)
    return DensityField(win, res, xs, ys, dens, mass, 0.0, logd, holes,
                        {"N": N, "criticalIndex": i, "family": fam.describe()})


def _batched_critical(track: CriticalTrack, num, den, iters: int = 60):
    """Newton on the Wronskian for every row, started at track.c0 (unit lifts, NaN if lost)."""
    M = num.shape[0]
    if track.constant:
        return np.repeat(_hom_point(track.c0)[None, :], M, axis=0)
    J = np.array([wronskian_coefficients(a, b) for a, b in zip(num, den)])
    c0 = track.c0
    inverse = c0.is_infinity or abs(c0.z) > abs(c0.w)
    coef = J[:, ::-1] if inverse else J
    t = np.full(M, (c0.w / c0.z) if inverse else (c0.z / c0.w), dtype=complex)
    dcoef = coef[:, 1:] * np.arange(1, coef.shape[1])
    rev, drev = coef[:, ::-1], dcoef[:, ::-1]
    for _ in range(iters):
        fv = np.zeros(M, complex)
        for k in range(rev.shape[1]):
            fv = fv * t + rev[:, k]
        dv = np.zeros(M, complex)
        for k in range(drev.shape[1]):
            dv = dv * t + drev[:, k]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = t - np.where(fv == 0, 0, fv / dv)
    bad = ~np.isfinite(t) | (np.abs(t - (c0.w / c0.z if inverse else c0.z / c0.w)) > 0.5)
    X = np.stack([np.ones(M, complex), t], -1) if inverse else np.stack([t, np.ones(M, complex)], -1)
    X, _ = _normalize_rows(X)
    X[bad] = np.nan
    return X


# --------------------------------------------------------------------------
# output

def _field_values(field_):
    if isinstance(field_, SliceGrid):
        return field_.values
    if isinstance(field_, DensityField):
        return field_.density
    return np.asarray(field_, dtype=float)


def _spec_hash(field_, scaling) -> str:
    h = hashlib.sha256()
    meta = getattr(field_, "meta", {})
    h.update(json.dumps({"meta": meta, "window": getattr(field_, "window", None),
                         "resolution": getattr(field_, "resolution", None), "scaling": scaling},
                        sort_keys=True, default=str).encode())
    h.update(np.ascontiguousarray(_field_values(field_), dtype="<f8").tobytes())
    return h.hexdigest()


def scale_field(values, scaling: str = "linear") -> np.ndarray:
    """Map a finite field to 16-bit gray levels; a constant field maps to 32768."""
    v = np.asarray(values, dtype=float)
    if not np.isfinite(v).all():
        raise ValidationError("render needs a finite field")
    if scaling == "log":
        pos = v[v > 0]
        eps = pos.min() if pos.size else 1.0
        v = np.log(np.maximum(v, eps))
    elif scaling == "equalized":
        flat = v.ravel()
        ranks = np.unique(flat, return_inverse=True)[1].reshape(v.shape)
        v = ranks.astype(float)
    elif scaling != "linear":
        raise ValidationError(f"unknown scaling {scaling!r}")
    lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        return np.full(v.shape, 32768, dtype=np.uint16)
    return np.round((v - lo) / (hi - lo) * 65535).astype(np.uint16)


def render(field_, path, scaling: str = "linear") -> str:
    """Write a 16-bit binary PGM (P5, big-endian) with the top row at the largest Im part.

    The header carries a comment with a SHA-256 of the field and its
    metadata; returns that hash.
    """
    g = scale_field(_field_values(field_), scaling)[::-1]
    digest = _spec_hash(field_, scaling)
    h, w = g.shape
    header = f"P5\n# spec {digest}\n{w} {h}\n65535\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(g.astype(">u2").tobytes())
    return digest


def write_csv(field_, path) -> None:
    """Dump cell centres and values as CSV with header re,im,value (rows by increasing Im)."""
    vals = _field_values(field_)
    xs, ys = field_.xs, field_.ys
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["re", "im", "value"])
        for j, y in enumerate(ys):
            for i, x in enumerate(xs):
                w.writerow([repr(float(x)), repr(float(y)), repr(float(vals[j, i]))])
