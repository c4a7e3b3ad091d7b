import math

import numpy as np
import pytest

from ratdyn.errors import BadSpec, CriticalCollision, ValidationError
from ratdyn.parameter import (SliceGrid, activity_indicator, bifurcation_density, lyapunov_slice,
                              make_family, marked_critical_points, render, scale_field, window_stats,
                              write_csv, xi)

import oracles

LOG2 = math.log(2)
QUAD = make_family("quadratic")


def point_window(c, h=0.01):
    return (c.real - h, c.real + h, c.imag - h, c.imag + h)


def test_make_family_builtins():
    assert QUAD.paramDim == 1 and QUAD.degree == 2
    assert QUAD.map_at(0.5).num.tolist() == pytest.approx([0.5, 0, 1])
    cub = make_family("unicritical:3")
    f = cub.map_at(0.2)
    assert f.degree == 3 and f(1).affine == pytest.approx(1.2)


def test_make_family_literal_and_errors():
    fam = make_family("z^2 + a*z + b")
    assert fam.paramDim == 2
    assert fam.map_at([1, 2])(1).affine == pytest.approx(4)
    with pytest.raises(BadSpec):
        make_family("unknown-family")
    with pytest.raises(BadSpec):
        make_family("(z^2 + a)/(z^2 + a)")


def test_marked_critical_points():
    tracks = marked_critical_points(QUAD, 0.3)
    assert tracks[0].c(0.3).affine == 0 and tracks[1].c(-1).is_infinity
    cub = make_family("cubic")
    a, b = -3 + 0.5j, 0.2
    tr = marked_critical_points(cub, [a, b])
    finite = sorted((t.c([a, b]).affine for t in tr if not t.c([a, b]).is_infinity), key=lambda z: z.real)
    expected = sorted([np.sqrt(-a / 3), -np.sqrt(-a / 3)], key=lambda z: z.real)
    assert finite == pytest.approx(expected)
    with pytest.raises(CriticalCollision):
        marked_critical_points(cub, [0, 0])


def test_xi_examples():
    for n in range(6):
        p, d = xi(QUAD, 0, n, 0)
        assert p.affine == 0 and d == pytest.approx(1)
    assert [xi(QUAD, 0, n, -2)[1] for n in range(4)] == pytest.approx([1, -3, -11, -43])
    p, d = xi(QUAD, 0, 0, 0.3 + 0.1j)
    assert p.affine == pytest.approx(0.3 + 0.1j) and d == pytest.approx(1)


def test_xi_matches_high_precision_fd():
    c = -1.3 + 0.05j
    for n in (5, 12):
        _, d = xi(QUAD, 0, n, c)
        with oracles.mp.workdps(60):
            def f(cc):
                z = cc
                for _ in range(n):
                    z = z * z + cc
                return z
            fd = complex(oracles.mp.diff(f, oracles.mp.mpc(c)))
        assert abs(d - fd) / (1 + abs(fd)) < 1e-9


def test_slice_point_values():
    s = lyapunov_slice(QUAD, point_window(0), 1)
    assert abs(s.values[0, 0] - LOG2) <= 3 * s.stderr[0, 0] + 1e-12
    s = lyapunov_slice(QUAD, point_window(1), 1)
    assert abs(s.values[0, 0] - oracles.quadratic_lyapunov(1)) < 1e-3 + 3 * s.stderr[0, 0]
    s = lyapunov_slice(QUAD, point_window(-2), 1)
    assert abs(s.values[0, 0] - LOG2) < 1e-2


def test_slice_generic_path_agrees():
    fam = make_family("z^2 + c")
    s = lyapunov_slice(fam, point_window(0.25 + 0.5j), 1, count=2000)
    t = lyapunov_slice(QUAD, point_window(0.25 + 0.5j), 1, count=2000)
    assert abs(s.values[0, 0] - t.values[0, 0]) < 3 * (s.stderr[0, 0] + t.stderr[0, 0]) + 1e-3


def test_slice_validation_and_determinism():
    with pytest.raises(ValidationError):
        lyapunov_slice(QUAD, (-2.5, 1, -1.5, 1.5), 0)
    a = lyapunov_slice(QUAD, (-2, 0.5, -1, 1), 6, count=500)
    b = lyapunov_slice(QUAD, (-2, 0.5, -1, 1), 6, count=500)
    assert np.array_equal(a.values, b.values)


def _synthetic(fn, n=21, window=(-1, 1, -1, 1)):
    x0, x1, y0, y1 = window
    xs = x0 + (np.arange(n) + 0.5) * (x1 - x0) / n
    ys = y0 + (np.arange(n) + 0.5) * (y1 - y0) / n
    C = xs[None, :] + 1j * ys[:, None]
    vals = fn(C)
    return SliceGrid(window, (n, n), xs, ys, vals, np.zeros_like(vals), np.zeros(vals.shape, bool), {})


def test_density_of_known_fields():
    d = bifurcation_density(_synthetic(lambda c: np.abs(c) ** 2))
    inner = d.density[1:-1, 1:-1]
    assert inner == pytest.approx(np.full(inner.shape, 2 / math.pi), rel=1e-9)
    d = bifurcation_density(_synthetic(lambda c: np.log(np.abs(c - 3))))
    assert np.abs(d.density).max() < 1e-3
    stats = window_stats(bifurcation_density(_synthetic(lambda c: np.abs(c) ** 2)), lambda c: np.abs(c) < 0.5)
    assert stats.meanDensity == pytest.approx(2 / math.pi, rel=1e-9)


def test_activity_examples():
    a = activity_indicator(QUAD, 0, point_window(0), 1, 30)
    assert a.density[0, 0] == pytest.approx(2.0 ** -30 / math.pi, rel=1e-9)
    b = activity_indicator(QUAD, 0, point_window(-2), 1, 30)
    # |xi'_N| = (2/3) 4^N and omega_FS at xi_N = 2 carries 1/(1+4)^2
    expected = math.log((2 / 3 * 4.0 ** 30) ** 2 * 2.0 ** -30 / (math.pi * 25))
    assert b.logDensity[0, 0] == pytest.approx(expected, rel=1e-9)
    c = activity_indicator(QUAD, 0, point_window(2), 1, 40)
    assert c.density[0, 0] < 1e-100


def test_render_and_csv(tmp_path):
    const = _synthetic(lambda c: np.ones(c.shape), n=4)
    assert np.all(scale_field(const.values) == 32768)
    p1, p2 = tmp_path / "a.pgm", tmp_path / "b.pgm"
    field_ = _synthetic(lambda c: np.abs(c), n=5)
    render(field_, p1, "log")
    render(field_, p2, "log")
    data = p1.read_bytes()
    assert data == p2.read_bytes()
    assert data.startswith(b"P5\n# spec ") and b"\n5 5\n65535\n" in data
    assert len(data.split(b"65535\n", 1)[1]) == 5 * 5 * 2
    csv_path = tmp_path / "a.csv"
    write_csv(field_, csv_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "re,im,value" and len(lines) == 26
