"""Green functions of lifts, backward-orbit sampling of the maximal-entropy
measure, Monte-Carlo Lyapunov exponents and the polynomial escape-rate oracle.

Sampling pulls an anchor back through uniformly random inverse branches.
With ``tree_levels = m > 0`` the last m levels are taken as a full d-ary tree
below a random prefix (stratified sampling): every returned point is still
marginally a uniform random n-fold preimage, but the leaves of one tree
cover all branches evenly, which lowers the variance of averages and keeps
the branch labels coherent when the same seed is reused across parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ExceptionalAnchor, ValidationError
from .sphere import (HomogeneousLift, RationalMap, SpherePoint, chordal_hom,
                     critical_distance)


# --------------------------------------------------------------------------
# Green function of a lift

def green_lift(F, x, n_max: int) -> float:
    """d^-n log||F^n(x)|| with per-step renormalization (Euclidean norm).

    The error against the limit is O(d^-n_max); see ``green_truncation_bound``.
    """
    if isinstance(F, RationalMap):
        F = F.lift()
    if n_max < 1:
        raise ValidationError("n_max must be >= 1")
    a, b = complex(x[0]), complex(x[1])
    norm = math.hypot(abs(a), abs(b))
    if norm == 0:
        raise ValidationError("the origin has no Green value")
    d = F.degree
    g = math.log(norm)
    a, b = a / norm, b / norm
    w = 1.0
    for _ in range(n_max):
        P, Q = F(a, b)
        P, Q = complex(P), complex(Q)
        s = math.hypot(abs(P), abs(Q))
        w /= d
        g += w * math.log(s)
        a, b = P / s, Q / s
    return g


def green_truncation_bound(F, n_max: int, samples: int = 4096, seed: int = 0) -> float:
    """Bound C d^-n / (d-1) on |G - G_n|, with C = sup |log||F(u)|||, ||u|| = 1.

    The upper half of C is the rigorous sum of coefficient moduli; the lower
    half is a sampled minimum over the unit sphere of C^2.
    """
    if isinstance(F, RationalMap):
        F = F.lift()
    d = F.degree
    upper = math.log(np.abs(F.P).sum() + np.abs(F.Q).sum())
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(samples, 4))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    x = v[:, 0] + 1j * v[:, 1]
    y = v[:, 2] + 1j * v[:, 3]
    P, Q = F(x, y)
    lower = -math.log(np.sqrt(np.abs(P) ** 2 + np.abs(Q) ** 2).min())
    return max(upper, lower, 0.0) * d ** (-n_max) / (d - 1)


# --------------------------------------------------------------------------
# preimages

def preimages(f: RationalMap, X, Y, sort: bool = False):
    """All d preimages (with multiplicity) of homogeneous targets (X, Y).

    Solves Y P(x, y) - X Q(x, y) = 0 in the chart where the equation is best
    conditioned (larger of the end coefficients), via batched companion
    eigenvalues followed by two Newton steps.  Returns (x, y) of shape (B, d),
    normalized chart representatives.  With ``sort`` the d roots of each row
    are ordered by argument, giving a deterministic branch labelling.
    """
    X = np.atleast_1d(np.asarray(X, dtype=complex))
    Y = np.atleast_1d(np.asarray(Y, dtype=complex))
    d = f.degree
    R = Y[:, None] * f.num[None, :] - X[:, None] * f.den[None, :]
    flip = np.abs(R[:, 0]) > np.abs(R[:, d])
    C = np.where(flip[:, None], R[:, ::-1], R)
    lead = C[:, d]
    bad = lead == 0
    if np.any(bad):
        raise ValidationError("preimage equation vanishes identically (degenerate target)")
    B = len(X)
    comp = np.zeros((B, d, d), dtype=complex)
    if d > 1:
        idx = np.arange(d - 1)
        comp[:, idx + 1, idx] = 1.0
    comp[:, :, d - 1] = -C[:, :d] / lead[:, None]
    roots = np.linalg.eigvals(comp)
    dC = C[:, 1:] * np.arange(1, d + 1)[None, :]
    for _ in range(2):
        fv = _polyval_rows(C, roots)
        dv = _polyval_rows(dC, roots)
        ok = dv != 0
        step = np.where(ok, fv / np.where(ok, dv, 1.0), 0.0)
        small = np.abs(step) < 1e-3 * np.maximum(1.0, np.abs(roots))
        roots = np.where(small, roots - step, roots)
    # back to homogeneous pairs
    t = roots
    x = np.where(flip[:, None], 1.0 + 0j, t)
    y = np.where(flip[:, None], t, 1.0 + 0j)
    x, y = _normalize(x, y)
    if sort:
        with np.errstate(divide="ignore", invalid="ignore"):
            ang = np.angle(x * np.conj(y))
        order = np.argsort(ang, axis=1, kind="stable")
        x = np.take_along_axis(x, order, axis=1)
        y = np.take_along_axis(y, order, axis=1)
    return x, y


def _polyval_rows(C, t):
    acc = np.zeros_like(t) + C[:, -1][:, None]
    for k in range(C.shape[1] - 2, -1, -1):
        acc = acc * t + C[:, k][:, None]
    return acc


def _normalize(x, y):
    big = np.abs(x) > np.abs(y)
    with np.errstate(divide="ignore", invalid="ignore"):
        nx = np.where(big, 1.0 + 0j, x / np.where(big, 1.0, y))
        ny = np.where(big, y / np.where(big, x, 1.0), 1.0 + 0j)
    return nx, ny


def is_exceptional(f: RationalMap, p, tol: float = 1e-8) -> bool:
    """True if p is totally invariant (two consecutive fully ramified pullbacks)."""
    p = SpherePoint.of(p)
    x, y = np.array([p.z]), np.array([p.w])
    for _ in range(2):
        px, py = preimages(f, x, y)
        spread = chordal_hom(px[0][:, None], py[0][:, None], px[0][None, :], py[0][None, :]).max()
        if spread > tol:
            return False
        x, y = px[0, :1], py[0, :1]
    return True


def default_anchor(f: RationalMap, seed: int) -> SpherePoint:
    """Pseudo-random non-critical, non-exceptional point derived from the seed."""
    rng = np.random.default_rng([seed, 0xA7C])
    for _ in range(64):
        z = complex(*rng.normal(size=2))
        p = SpherePoint.of(z)
        if critical_distance(f, p.z, p.w) > 1e-6 and not is_exceptional(f, p):
            return p
    raise ExceptionalAnchor("could not draw a non-exceptional anchor")


# --------------------------------------------------------------------------
# sampling

@dataclass(frozen=True)
class EquilibriumSample:
    points_x: np.ndarray
    points_y: np.ndarray
    burnInDepth: int
    seed: int
    anchor: SpherePoint
    treeLevels: int = 0

    @property
    def points(self) -> list:
        return [SpherePoint(a, b) for a, b in zip(self.points_x, self.points_y)]

    @property
    def affine(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.points_y == 0, complex(np.inf, 0), self.points_x / self.points_y)

    def __len__(self):
        return len(self.points_x)


def stratified_layout(count: int, d: int, tree_levels: int, depth: int, seed: int):
    """Shared random design: prefix branch choices and per-group digit masks.

    Returns (groups, prefix[G, depth-m], masks[G, m]).  Leaf p of group g is
    used iff g d^m + (p (+) mask_g) < count, where (+) is digitwise addition
    mod d; this keeps a partial last group unbiased.
    """
    m = tree_levels
    if not 0 <= m <= depth:
        raise ValidationError("tree_levels must lie in [0, depth]")
    G = -(-count // d ** m)
    rng = np.random.default_rng(seed)
    prefix = rng.integers(0, d, size=(G, depth - m))
    masks = rng.integers(0, d, size=(G, m))
    return G, prefix, masks


def leaf_keys(d: int, m: int, masks: np.ndarray) -> np.ndarray:
    """keys[g, p] = p (+) mask_g as an integer, for all leaves p < d^m."""
    p = np.arange(d ** m)
    keys = np.zeros((masks.shape[0], d ** m), dtype=np.int64)
    place = 1
    for i in range(m):
        digit = (p // place) % d
        keys += ((digit[None, :] + masks[:, i][:, None]) % d) * place
        place *= d
    return keys


def _check_sampling_args(depth, count):
    if depth < 1 or count < 1:
        raise ValidationError("depth and count must be positive")


def sample_equilibrium(f: RationalMap, depth: int = 50, count: int = 20000, seed: int = 0,
                       anchor=None, tree_levels: int = 0, sort_branches: bool = False,
                       min_depth: int = 20) -> EquilibriumSample:
    """``count`` random depth-fold preimages of an anchor.

    Raises ``ExceptionalAnchor`` when an explicit anchor is totally invariant.
    """
    _check_sampling_args(depth, count)
    if depth < min_depth:
        raise ValidationError(f"depth must be >= {min_depth}")
    if anchor is None:
        a = default_anchor(f, seed)
    else:
        a = SpherePoint.of(anchor)
        if is_exceptional(f, a):
            raise ExceptionalAnchor(f"anchor {a.affine} is totally invariant")
    d = f.degree
    m = tree_levels
    G, prefix, masks = stratified_layout(count, d, m, depth, seed)
    x = np.full(G, a.z)
    y = np.full(G, a.w)
    rows = np.arange(G)
    for k in range(depth - m):
        px, py = preimages(f, x, y, sort=sort_branches)
        x, y = px[rows, prefix[:, k]], py[rows, prefix[:, k]]
    for _ in range(m):
        px, py = preimages(f, x, y, sort=sort_branches)
        x, y = px.ravel(), py.ravel()
    if m > 0:
        keys = leaf_keys(d, m, masks) + (np.arange(G) * d ** m)[:, None]
        keys = keys.ravel()
        sel = np.nonzero(keys < count)[0]
        order = np.argsort(keys[sel], kind="stable")
        sel = sel[order]
        x, y = x[sel], y[sel]
    x.setflags(write=False)
    y.setflags(write=False)
    return EquilibriumSample(x, y, depth, seed, a, m)


@dataclass(frozen=True)
class LyapunovEstimate:
    value: float
    stderr: float
    sampleCount: int

    def to_dict(self):
        return {"value": self.value, "stderr": self.stderr, "sampleCount": self.sampleCount}


def mean_stderr(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    n = v.size
    mean = float(v.mean())
    sd = float(v.std(ddof=1)) if n > 1 else 0.0
    return mean, sd / math.sqrt(n)


def lyapunov(f: RationalMap, depth: int = 50, count: int = 20000, seed: int = 0,
             anchor=None, tree_levels: int = 0) -> LyapunovEstimate:
    """Mean of log|f'| (chordal) over an equilibrium sample; stderr = sd / sqrt(n)."""
    s = sample_equilibrium(f, depth, count, seed, anchor, tree_levels)
    vals = f.log_deriv_hom(s.points_x, s.points_y)
    # a sample point exactly on a critical point has measure zero; drop it
    vals = vals[np.isfinite(vals)]
    mean, se = mean_stderr(vals)
    return LyapunovEstimate(mean, se, int(vals.size))


# --------------------------------------------------------------------------
# polynomial oracle

def polynomial_green_escape(p: RationalMap, z, n_max: int = 1000, radius: float = 1e10) -> float:
    """Escape-rate Green function lim d^-n log+|p^n(z)| truncated at n_max.

    Once |p^k(z)| exceeds ``radius`` the tail is summed in closed form using
    the leading coefficient a: G = d^-k (log|p^k(z)| + log|a| / (d-1)).
    """
    if not p.is_polynomial:
        raise ValidationError("polynomial_green_escape needs a polynomial map")
    d = p.degree
    coef = p.num / p.den[0]
    a = coef[d]
    if a == 0:
        raise ValidationError("leading coefficient vanishes")
    z = complex(z)
    rev = coef[::-1]
    w = 1.0
    for k in range(1, n_max + 1):
        z = complex(np.polyval(rev, z))
        w /= d
        if abs(z) > radius:
            return w * (math.log(abs(z)) + math.log(abs(a)) / (d - 1))
    return w * max(0.0, math.log(abs(z))) if abs(z) > 0 else 0.0


def polynomial_lyapunov_oracle(p: RationalMap, n_max: int = 1000) -> float:
    """log d + sum of G over the finite critical points (with multiplicity)."""
    d = p.degree
    total = math.log(d)
    coef = p.num / p.den[0]
    total += math.log(abs(coef[d]))
    for c, m in p.critical:
        if not c.is_infinity:
            total += m * polynomial_green_escape(p, c.affine, n_max)
    return total
