"""Compiled kernels for Lyapunov slices of the unicritical family z^d + c.

Every cell reuses the same random design (prefix branch labels, tree digit
masks), so neighbouring parameters see coherent backward orbits and the
Monte-Carlo error is strongly correlated across the grid.  Branches are
labelled as principal root times the b-th power of a primitive d-th root
of unity.
"""

import math

import numba
import numpy as np

# the bundled TBB is too old for numba; prefer OpenMP without a warning
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


@numba.njit(cache=True, inline="always")
def _sqrt(u, v):
    r = math.sqrt(u * u + v * v)
    t = math.sqrt(0.5 * (r + abs(u)))
    q = v / (2 * t) if t > 0 else 0.0
    if u >= 0:
        return t, q
    return abs(q), math.copysign(t, v)


@numba.njit(cache=True, inline="always")
def _root(u, v, d):
    if d == 2:
        return _sqrt(u, v)
    r = math.hypot(u, v)
    if r == 0.0:
        return 0.0, 0.0
    rr = r ** (1.0 / d)
    th = math.atan2(v, u) / d
    return rr * math.cos(th), rr * math.sin(th)


@numba.njit(cache=True, inline="always")
def _log_sph_deriv(x, y, cx, cy, d):
    # log of the chordal derivative of z^d + c at x + iy
    r2 = x * x + y * y
    pr, pi = 1.0, 0.0
    for _ in range(d):
        pr, pi = pr * x - pi * y, pr * y + pi * x
    fx = pr + cx
    fy = pi + cy
    return math.log(d) + 0.5 * (d - 1) * math.log(r2) + math.log1p(r2) - math.log1p(fx * fx + fy * fy)


@numba.njit(cache=True)
def _cell(cx, cy, ax, ay, d, prefix, masks, count, m, wr, wi, tree):
    G, npre = prefix.shape
    nleaf = d ** m
    nnodes = tree.shape[0]
    first_leaf = nnodes - nleaf
    acc = 0.0
    acc2 = 0.0
    n = 0
    for g in range(G):
        x = ax
        y = ay
        for k in range(npre):
            px, py = _root(x - cx, y - cy, d)
            b = prefix[g, k]
            x = px * wr[b] - py * wi[b]
            y = px * wi[b] + py * wr[b]
        tree[0] = complex(x, y)
        for q in range(first_leaf):
            z = tree[q]
            px, py = _root(z.real - cx, z.imag - cy, d)
            for b in range(d):
                tree[d * q + 1 + b] = complex(px * wr[b] - py * wi[b], px * wi[b] + py * wr[b])
        for p in range(nleaf):
            key = 0
            place = 1
            pp = p
            for t in range(m):
                digit = pp % d
                pp //= d
                key += ((digit + masks[g, t]) % d) * place
                place *= d
            if g * nleaf + key >= count:
                continue
            z = tree[first_leaf + p]
            v = _log_sph_deriv(z.real, z.imag, cx, cy, d)
            acc += v
            acc2 += v * v
            n += 1
    mean = acc / n
    var = (acc2 - n * mean * mean) / (n - 1) if n > 1 else 0.0
    return mean, math.sqrt(max(var, 0.0) / n)


@numba.njit(cache=True, parallel=True)
def unicritical_slice(cxs, cys, ax, ay, d, prefix, masks, count, m, out, err):
    ny, nx = out.shape
    wr = np.empty(d)
    wi = np.empty(d)
    for b in range(d):
        wr[b] = math.cos(2 * math.pi * b / d)
        wi[b] = math.sin(2 * math.pi * b / d)
    nnodes = (d ** (m + 1) - 1) // (d - 1)
    for cell in numba.prange(ny * nx):
        j = cell // nx
        i = cell % nx
        tree = np.empty(nnodes, dtype=np.complex128)
        mean, se = _cell(cxs[i], cys[j], ax, ay, d, prefix, masks, count, m, wr, wi, tree)
        out[j, i] = mean
        err[j, i] = se
