"""Rational maps of the Riemann sphere in homogeneous coordinates.

A degree-d map is stored as two coefficient vectors ``num`` and ``den``
(ascending powers of z, length d+1).  The homogeneous lift is

    P(x, y) = sum_k num[k] x^k y^(d-k),   Q(x, y) = sum_k den[k] x^k y^(d-k)

and f(z) = P(z, 1) / Q(z, 1).  Points are homogeneous pairs kept in a chart
representative, (z/w : 1) or (1 : w/z), so the larger coordinate is exactly 1.
All derivative quantities default to the chordal metric of diameter 2; the
affine-chart ("plane") variant is available where textbook examples need it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import BadDegree, DegenerateMap, RootFindingFailure, ValidationError

RESULTANT_TOL = 1e-12
CLUSTER_TOL = 1e-8
INF = complex(math.inf, 0.0)
METRICS = ("chordal", "plane")


def _check_metric(metric):
    if metric not in METRICS:
        raise ValidationError(f"unknown metric {metric!r}, expected one of {METRICS}")


# --------------------------------------------------------------------------
# points

@dataclass(frozen=True)
class SpherePoint:
    """A point (z : w) of the Riemann sphere, stored in a chart representative."""

    z: complex
    w: complex

    def __post_init__(self):
        z, w = complex(self.z), complex(self.w)
        if not (np.isfinite(z) and np.isfinite(w)):
            raise ValidationError("homogeneous coordinates must be finite")
        if z == 0 and w == 0:
            raise ValidationError("(0 : 0) is not a point of the sphere")
        if abs(z) > abs(w):
            z, w = 1.0 + 0j, w / z
        else:
            z, w = z / w, 1.0 + 0j
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "w", w)

    @classmethod
    def of(cls, value) -> "SpherePoint":
        """Build from a complex number, ``inf`` or an existing point."""
        if isinstance(value, SpherePoint):
            return value
        c = complex(value)
        if math.isinf(c.real) or math.isinf(c.imag):
            return cls(1.0, 0.0)
        return cls(c, 1.0)

    @property
    def is_infinity(self) -> bool:
        return self.w == 0

    @property
    def affine(self) -> complex:
        """Coordinate in the standard chart; ``INF`` for the point at infinity."""
        if self.w == 0:
            return INF
        return self.z / self.w

    @property
    def pair(self) -> tuple[complex, complex]:
        return self.z, self.w

    def __repr__(self):
        return f"SpherePoint({self.affine!r})"


INFINITY = SpherePoint(1.0, 0.0)


def chordal_hom(x1, y1, x2, y2):
    """Chordal distance between homogeneous pairs (vectorized)."""
    num = 2.0 * np.abs(x1 * y2 - x2 * y1)
    den = np.sqrt(np.abs(x1) ** 2 + np.abs(y1) ** 2) * np.sqrt(np.abs(x2) ** 2 + np.abs(y2) ** 2)
    return num / den


def chordal(p, q) -> float:
    """Chordal distance in [0, 2] between two points (or complex numbers / inf)."""
    p, q = SpherePoint.of(p), SpherePoint.of(q)
    return float(min(2.0, chordal_hom(p.z, p.w, q.z, q.w)))


def to_hom(values):
    """Affine values (complex array, inf allowed) to normalized homogeneous arrays."""
    a = np.asarray(values, dtype=complex)
    inf = np.isinf(a.real) | np.isinf(a.imag)
    big = ~inf & (np.abs(a) > 1.0)
    x = np.where(inf | big, 1.0 + 0j, a)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.where(inf, 0j, np.where(big, 1.0 / np.where(big, a, 1.0), 1.0 + 0j))
    return x, y


def from_hom(x, y):
    """Homogeneous arrays to affine values (inf where y == 0)."""
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = x / y
    return np.where(y == 0, INF, out)


# --------------------------------------------------------------------------
# homogeneous polynomial helpers

def hom_eval(coef, x, y):
    """sum_k coef[k] x^k y^(d-k), Horner in x with running powers of y."""
    d = len(coef) - 1
    acc = np.zeros(np.broadcast(x, y).shape, dtype=complex) + coef[d]
    ypow = np.ones_like(acc)
    for k in range(d - 1, -1, -1):
        ypow = ypow * y
        acc = acc * x + coef[k] * ypow
    return acc


def d_dx(coef):
    """Coefficients of dP/dx (degree d-1)."""
    d = len(coef) - 1
    return np.array([(k + 1) * coef[k + 1] for k in range(d)], dtype=complex)


def d_dy(coef):
    """Coefficients of dP/dy (degree d-1)."""
    d = len(coef) - 1
    return np.array([(d - k) * coef[k] for k in range(d)], dtype=complex)


def wronskian_coefficients(num, den):
    """J = P_x Q_y - P_y Q_x, homogeneous of degree 2d-2, ascending in x/y."""
    return np.convolve(d_dx(num), d_dy(den)) - np.convolve(d_dy(num), d_dx(den))


def sylvester_resultant(num, den) -> complex:
    """Resultant of the two binary forms via the Sylvester determinant."""
    d = len(num) - 1
    p = np.asarray(num, dtype=complex)[::-1]
    q = np.asarray(den, dtype=complex)[::-1]
    s = np.zeros((2 * d, 2 * d), dtype=complex)
    for r in range(d):
        s[r, r:r + d + 1] = p
        s[d + r, r:r + d + 1] = q
    return complex(np.linalg.det(s))


# --------------------------------------------------------------------------
# maps

@dataclass(frozen=True)
class HomogeneousLift:
    """A pair (P, Q) of binary forms of degree d, coefficients kept as given."""

    P: np.ndarray
    Q: np.ndarray

    @property
    def degree(self) -> int:
        return len(self.P) - 1

    def __call__(self, x, y):
        return hom_eval(self.P, x, y), hom_eval(self.Q, x, y)


def make_lift(P, Q) -> HomogeneousLift:
    P = np.atleast_1d(np.asarray(P, dtype=complex))
    Q = np.atleast_1d(np.asarray(Q, dtype=complex))
    n = max(len(P), len(Q))
    P = np.pad(P, (0, n - len(P)))
    Q = np.pad(Q, (0, n - len(Q)))
    if n - 1 < 1:
        raise BadDegree("lift degree must be at least 1")
    P.setflags(write=False)
    Q.setflags(write=False)
    return HomogeneousLift(P, Q)


@dataclass(frozen=True, eq=False)
class RationalMap:
    """Normalized rational map of exact degree d >= 2 (see module docstring)."""

    num: np.ndarray
    den: np.ndarray
    resultant: complex

    @property
    def degree(self) -> int:
        return len(self.num) - 1

    @cached_property
    def is_polynomial(self) -> bool:
        return bool(np.all(self.den[1:] == 0))

    @cached_property
    def wronskian(self) -> np.ndarray:
        w = wronskian_coefficients(self.num, self.den)
        w.setflags(write=False)
        return w

    @cached_property
    def critical(self) -> tuple:
        return tuple(critical_points(self))

    @cached_property
    def critical_hom(self) -> tuple[np.ndarray, np.ndarray]:
        pts = [c for c, _ in self.critical]
        return (np.array([p.z for p in pts], dtype=complex),
                np.array([p.w for p in pts], dtype=complex))

    def lift(self) -> HomogeneousLift:
        return HomogeneousLift(self.num, self.den)

    def __call__(self, p):
        return evaluate(self, p)

    def __eq__(self, other):
        if not isinstance(other, RationalMap):
            return NotImplemented
        return (np.array_equal(self.num, other.num) and np.array_equal(self.den, other.den))

    def __hash__(self):
        return hash((self.num.tobytes(), self.den.tobytes()))

    def __repr__(self):
        return f"RationalMap(num={self.num.tolist()}, den={self.den.tolist()})"

    # vectorized homogeneous primitives ---------------------------------------

    def hom(self, x, y):
        return hom_eval(self.num, x, y), hom_eval(self.den, x, y)

    def jacobian(self, x, y):
        return hom_eval(self.wronskian, x, y)

    def log_deriv_hom(self, x, y, metric="chordal"):
        """log of |f'| at homogeneous points; -inf exactly at critical points."""
        P, Q = self.hom(x, y)
        J = self.jacobian(x, y)
        d = self.degree
        with np.errstate(divide="ignore", invalid="ignore"):
            if metric == "chordal":
                r = (np.log(np.abs(J)) + np.log(np.abs(x) ** 2 + np.abs(y) ** 2)
                     - math.log(d) - np.log(np.abs(P) ** 2 + np.abs(Q) ** 2))
            elif metric == "plane":
                r = (np.log(np.abs(J)) + 2 * np.log(np.abs(y))
                     - math.log(d) - 2 * np.log(np.abs(Q)))
                r = np.where((y == 0) | (Q == 0), np.nan, r)
            else:
                _check_metric(metric)
        return np.where(J == 0, -np.inf, r)

    def affine(self, z):
        """f(z) in the affine chart (vectorized, inf allowed)."""
        x, y = to_hom(z)
        return from_hom(*self.hom(x, y))

    def deriv(self, z):
        """Complex derivative f'(z) in the affine chart (finite z, finite f(z))."""
        z = np.asarray(z, dtype=complex)
        one = np.ones_like(z)
        Q = hom_eval(self.den, z, one)
        J = hom_eval(self.wronskian, z, one)
        with np.errstate(divide="ignore", invalid="ignore"):
            return J / (self.degree * Q * Q)

    def second_deriv(self, z):
        """f''(z) in the affine chart, from the polynomial quotient rule."""
        z = np.asarray(z, dtype=complex)
        N, D = self.num, self.den
        n0, n1, n2 = npoly.polyval(z, N), npoly.polyval(z, npoly.polyder(N)), npoly.polyval(z, npoly.polyder(N, 2))
        d0, d1, d2 = npoly.polyval(z, D), npoly.polyval(z, npoly.polyder(D)), npoly.polyval(z, npoly.polyder(D, 2))
        with np.errstate(divide="ignore", invalid="ignore"):
            return ((n2 * d0 - n0 * d2) * d0 - 2 * d1 * (n1 * d0 - n0 * d1)) / d0 ** 3


def make_rational_map(num, den, tol: float = RESULTANT_TOL) -> RationalMap:
    """Build a normalized map from ascending coefficient lists.

    The shorter list is zero-padded; the degree is ``max(len) - 1``.  Raises
    ``BadDegree`` for d < 2 and ``DegenerateMap`` if the resultant of the
    normalized lift is below ``tol`` in modulus.
    """
    num = np.atleast_1d(np.asarray(num, dtype=complex)).ravel()
    den = np.atleast_1d(np.asarray(den, dtype=complex)).ravel()
    n = max(len(num), len(den))
    d = n - 1
    if d < 2:
        raise BadDegree(f"degree must be at least 2, got {d}")
    num = np.pad(num, (0, n - len(num)))
    den = np.pad(den, (0, n - len(den)))
    if not (np.all(np.isfinite(num)) and np.all(np.isfinite(den))):
        raise ValidationError("coefficients must be finite")
    scale = max(np.abs(num).max(), np.abs(den).max())
    if scale == 0:
        raise DegenerateMap("all coefficients vanish")
    num = num / scale
    den = den / scale
    res = sylvester_resultant(num, den)
    if not abs(res) >= tol:
        raise DegenerateMap(f"resultant {abs(res):.3e} below tolerance {tol:g}")
    num.setflags(write=False)
    den.setflags(write=False)
    return RationalMap(num, den, res)


def polynomial_map(coeffs) -> RationalMap:
    """Polynomial sum coeffs[k] z^k as a rational map."""
    return make_rational_map(coeffs, [1.0])


def evaluate(f: RationalMap, p) -> SpherePoint:
    p = SpherePoint.of(p)
    P, Q = f.hom(p.z, p.w)
    return SpherePoint(complex(P), complex(Q))


def spherical_derivative(f: RationalMap, p) -> float:
    """|f'| for the chordal metric; chart independent, 0 exactly at critical points."""
    p = SpherePoint.of(p)
    return float(np.exp(f.log_deriv_hom(p.z, p.w)))


def log_derivative(f: RationalMap, p, metric: str = "chordal") -> float:
    _check_metric(metric)
    p = SpherePoint.of(p)
    return float(f.log_deriv_hom(p.z, p.w, metric))


# --------------------------------------------------------------------------
# critical points

def _horner_abs(coef, t):
    return npoly.polyval(abs(t), np.abs(coef))


def _polish(coef, t, iters=60):
    dcoef = npoly.polyder(coef)
    for _ in range(iters):
        fv = npoly.polyval(t, coef)
        dv = npoly.polyval(t, dcoef)
        if fv == 0 or dv == 0:
            break
        step = fv / dv
        t = t - step
        if abs(step) <= 4e-16 * max(1.0, abs(t)):
            break
    return t


def _chart_roots(coef):
    """Finite roots of an ascending coefficient vector, plus count at infinity."""
    scale = np.abs(coef).max()
    keep = np.nonzero(np.abs(coef) > 1e-14 * scale)[0]
    top = keep.max()
    n_inf = len(coef) - 1 - top
    c = coef[:top + 1]
    roots = npoly.polyroots(c) if top >= 1 else np.array([], dtype=complex)
    return c, np.asarray(roots, dtype=complex), n_inf


def critical_points(f: RationalMap) -> list[tuple[SpherePoint, int]]:
    """The 2d-2 critical points with multiplicity (Wronskian roots, Newton-polished)."""
    J = np.asarray(f.wronskian)
    c, roots, n_inf = _chart_roots(J)
    rev = c[::-1]
    pts = []
    for t in roots:
        if abs(t) <= 1.0:
            t = _polish(c, complex(t))
            resid = abs(npoly.polyval(t, c)) / max(_horner_abs(c, t), 1e-300)
            pts.append((complex(t), 1.0 + 0j))
        else:
            s = _polish(rev, 1.0 / complex(t))
            resid = abs(npoly.polyval(s, rev)) / max(_horner_abs(rev, s), 1e-300)
            pts.append((1.0 + 0j, complex(s)))
        if not resid < 1e-8:
            raise RootFindingFailure(f"Newton polish left relative residual {resid:.2e}")
    pts.extend([(1.0 + 0j, 0j)] * n_inf)
    clusters = [[SpherePoint(x, y), 1] for x, y in pts]
    dJ = npoly.polyder(J) if len(J) > 1 else np.zeros(1, complex)

    def multiple_root(p):
        # a merged cluster must sit on a root of J' (i.e. a multiple root of J)
        if p.is_infinity:
            return abs(J[-1]) <= 1e-13 * np.abs(J).max() and (len(J) < 2 or abs(J[-2]) <= 1e-6 * np.abs(J).max())
        t = p.affine
        return abs(npoly.polyval(t, dJ)) <= 1e-7 * max(_horner_abs(dJ, t), 1e-300)

    merged = True
    while merged:
        merged = False
        for a in range(len(clusters)):
            for b in range(a + 1, len(clusters)):
                pa, ma = clusters[a]
                pb, mb = clusters[b]
                dist = chordal(pa, pb)
                if dist < CLUSTER_TOL or (dist < 1e-4 and multiple_root(_mean(pa, ma, pb, mb))):
                    clusters[a] = [_mean(pa, ma, pb, mb), ma + mb]
                    del clusters[b]
                    merged = True
                    break
            if merged:
                break
    total = sum(m for _, m in clusters)
    if total != 2 * f.degree - 2:
        raise RootFindingFailure(f"found {total} critical points, expected {2 * f.degree - 2}")
    return sorted(((p, m) for p, m in clusters), key=_point_key)


def _mean(pa, ma, pb, mb):
    if pa.is_infinity or pb.is_infinity:
        return INFINITY if (pa.is_infinity and ma >= mb) or (pb.is_infinity and mb >= ma) else (pa if ma >= mb else pb)
    return SpherePoint.of((ma * pa.affine + mb * pb.affine) / (ma + mb))


def _point_key(item):
    p = item[0]
    if p.is_infinity:
        return (1, 0.0, 0.0)
    t = p.affine
    return (0, round(t.real, 9), round(t.imag, 9))


def critical_distance(f: RationalMap, x, y):
    """Chordal distance from homogeneous points to the critical set (vectorized)."""
    cx, cy = f.critical_hom
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    d = chordal_hom(x[..., None], y[..., None], cx, cy)
    return d.min(axis=-1)


# --------------------------------------------------------------------------
# orbits

@dataclass(frozen=True)
class OrbitRecord:
    """Orbit p, f(p), ..., f^n(p) with per-step log derivatives.

    ``logDeriv[j]`` is log|f'| at ``points[j]`` (-inf at an exact critical hit),
    ``cumLog[k]`` is the sum of the first k entries, so cumLog[n] = log|(f^n)'(p)|.
    """

    points: tuple
    logDeriv: np.ndarray
    cumLog: np.ndarray
    critDistance: np.ndarray
    metric: str = "chordal"

    @property
    def n(self) -> int:
        return len(self.points) - 1

    @property
    def affine(self) -> np.ndarray:
        return np.array([p.affine for p in self.points])

    def first_critical_hit(self, tol: float = 0.0):
        """Index of the first point with critDistance <= tol or -inf derivative."""
        bad = (self.critDistance <= tol) | np.isneginf(self.logDeriv)
        idx = np.nonzero(bad)[0]
        return int(idx[0]) if idx.size else None


def iterate_orbit(f: RationalMap, p, n: int, metric: str = "chordal") -> OrbitRecord:
    if n < 0:
        raise ValidationError("n must be nonnegative")
    _check_metric(metric)
    p = SpherePoint.of(p)
    xs = np.empty(n + 1, dtype=complex)
    ys = np.empty(n + 1, dtype=complex)
    pts = [p]
    xs[0], ys[0] = p.z, p.w
    for j in range(n):
        P, Q = f.hom(xs[j], ys[j])
        q = SpherePoint(complex(P), complex(Q))
        pts.append(q)
        xs[j + 1], ys[j + 1] = q.z, q.w
    logd = np.asarray(f.log_deriv_hom(xs, ys, metric), dtype=float)
    cum = np.concatenate(([0.0], np.cumsum(logd[:-1]))) if n > 0 else np.zeros(1)
    cdist = np.asarray(critical_distance(f, xs, ys), dtype=float)
    for a in (logd, cum, cdist):
        a.setflags(write=False)
    return OrbitRecord(tuple(pts), logd, cum, cdist, metric)


# --------------------------------------------------------------------------
# Moebius transformations

@dataclass(frozen=True, eq=False)
class MobiusTransform:
    """z -> (a z + b) / (c z + d) for matrix [[a, b], [c, d]]."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex).reshape(2, 2).copy()
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if det == 0 or not np.isfinite(det):
            raise ValidationError("Moebius matrix must be invertible")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls):
        return cls(np.eye(2))

    def inverse(self) -> "MobiusTransform":
        (a, b), (c, d) = self.matrix
        return MobiusTransform(np.array([[d, -b], [-c, a]]))

    def __call__(self, p) -> SpherePoint:
        p = SpherePoint.of(p)
        (a, b), (c, d) = self.matrix
        return SpherePoint(a * p.z + b * p.w, c * p.z + d * p.w)

    def hom(self, x, y):
        (a, b), (c, d) = self.matrix
        return a * x + b * y, c * x + d * y


def _compose_forms(coef, u, v, d):
    """sum_k coef[k] u^k v^(d-k) for linear forms u, v given in the t-chart."""
    out = np.zeros(d + 1, dtype=complex)
    for k, a in enumerate(coef):
        if a == 0:
            continue
        term = npoly.polymul(npoly.polypow(u, k), npoly.polypow(v, d - k))
        term = np.pad(term, (0, d + 1 - len(term)))[:d + 1]
        out += a * term
    return out


def mobius_conjugate(f: RationalMap, g: MobiusTransform, tol: float = RESULTANT_TOL) -> RationalMap:
    """g o f o g^{-1}, same degree."""
    d = f.degree
    (a, b), (c, e) = g.matrix
    # g^{-1} ~ [[e, -b], [-c, a]] acting on (t : 1)
    u = np.array([-b, e], dtype=complex)
    v = np.array([a, -c], dtype=complex)
    P = _compose_forms(f.num, u, v, d)
    Q = _compose_forms(f.den, u, v, d)
    return make_rational_map(a * P + b * Q, c * P + e * Q, tol=tol)
