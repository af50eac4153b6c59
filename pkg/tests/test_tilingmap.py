import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from bandembed.bandlimited import BLFunction, ThetaMap, make_chi1
from bandembed.convexgeom import Polytope
from bandembed.kernels import sinc
from bandembed.tilingmap import (
    BezoutMap, BLMap, TilingMap, _axis_inf, _deriv_entry, _nu_eig, bezout_demo, check_tiling,
    chi1_tail_bound, classify_zeros, find_zeros, nu_min_sv, theta_blmap, theta_constants,
    zeros_near_lattice,
)

DELTA = 0.5


@pytest.fixture(scope="module")
def consts1():
    chi1, K1, _ = make_chi1(DELTA, 4, 1)
    return theta_constants(8, [1.5], chi1), chi1, K1


@pytest.fixture(scope="module")
def tiling1():
    chi1, K1, _ = make_chi1(DELTA, 4, 1)
    C = theta_constants(9, [1.25], chi1)
    tiles = {(lo + 400,): Polytope.interval(lo, lo + 800) for lo in range(-2400, 2400, 800)}
    T = TilingMap(tiles, Polytope.interval(-2400, 2400), C, chi1)
    return T, C, chi1, K1


def test_cap_and_positivity(consts1):
    C, _, _ = consts1
    assert C.cap == pytest.approx(9 / (16 * 8))
    assert 0 < C.theta <= C.cap
    assert 0 < C.r1 < 0.25


def test_r1_derivative_disc_dense(consts1):
    C, _, _ = consts1
    # dense oracle on the disc, independent of the polar certificate grid
    rng = np.random.default_rng(0)
    rad = C.r1 * np.sqrt(rng.random(20000))
    z = rad * np.exp(2j * np.pi * rng.random(20000))
    z = np.concatenate([z, C.r1 * np.exp(2j * np.pi * np.linspace(0, 1, 5000))])
    assert np.abs(_deriv_entry(8, 1.5, z)).min() > 3 / 8


def test_theta_inf_grid_oracle(consts1):
    C, _, _ = consts1
    L, b = 8, 1.5
    # brute 2-D grid over a fundamental domain of the strip, discs removed
    x = np.linspace(0, L, 1601)
    y = np.linspace(-1, 1, 801)
    w = (x[:, None] + 1j * y[None, :]).ravel()
    rng = np.random.default_rng(4)
    ring = C.r1 * (1 + rng.random(200000)) * np.exp(2j * np.pi * rng.random(200000))
    w = np.concatenate([w, ring])
    keep = (np.abs(w) >= C.r1) & (np.abs(w - L) >= C.r1)
    vals = np.abs(np.exp(1j * np.pi * b * w[keep]) * np.sin(np.pi * w[keep] / L))
    assert C.inf_bound <= vals.min() + 1e-12
    assert C.inf_bound > 0.95 * vals.min()


def test_E_tail_probes(consts1):
    C, chi1, _ = consts1
    c = abs(complex(chi1.groups[0].coefs[0]))
    b = chi1.groups[0].factors[0].b
    rng = np.random.default_rng(3)
    for y in rng.uniform(-1, 1, 10):
        def f(s):
            return abs(c * complex(sinc(b * complex(s, y))) ** 4)
        tail = 2 * integrate.quad(f, C.E, C.E + 2e5, limit=2000)[0] + 2 * c * 2e5 ** -3 * math.cosh(math.pi * b) ** 4
        assert tail <= chi1_tail_bound(chi1, C.E) * (1 + 1e-9)
        assert C.theta_sup * tail < C.theta / 2


def test_nu_min_sv():
    assert nu_min_sv(np.eye(3)) == pytest.approx(1.0)
    assert nu_min_sv(np.diag([2.0, 0.5])) == pytest.approx(0.5)
    rng = np.random.default_rng(1)
    for _ in range(20):
        A = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        assert abs(nu_min_sv(A) - _nu_eig(A)) < 1e-9


def test_nu_lipschitz():
    rng = np.random.default_rng(2)
    for _ in range(20):
        A = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        B = A + 0.1 * (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
        assert abs(nu_min_sv(A) - nu_min_sv(B)) <= np.linalg.norm(A - B, 2) + 1e-12


def test_theta_zero(consts1):
    C, _, _ = consts1
    zs = zeros_near_lattice(theta_blmap(8, [1.5]), C, [16.0])
    assert len(zs) == 1
    assert abs(zs[0].z[0] - 16) < 1e-10
    assert zs[0].nu > 3 / 8 and zs[0].certified


def test_theta_plus_constant(consts1):
    C, _, _ = consts1
    c = 0.8 * C.theta * np.exp(0.7j)
    f = BLMap([ThetaMap(8, [1.5]).components()[0] + BLFunction.constant(1, c)])
    zs = find_zeros(f, [8.0], 2 * C.r1, C)
    assert len(zs) == 1
    assert abs(zs[0].z[0] - 8) < C.r1 and zs[0].nu > 2 / 8


def test_far_polydisc_empty(consts1):
    C, _, _ = consts1
    c = 0.5 * C.theta
    f = BLMap([ThetaMap(8, [1.5]).components()[0] + BLFunction.constant(1, c)])
    assert find_zeros(f, [4.0 + 0.3j], 2 * C.r1, C) == []


def test_theta_constants_2d():
    chi1 = make_chi1(DELTA, 4, 2)[0]
    C = theta_constants(9, [1.25, 1.5], chi1)
    assert C.cap == pytest.approx(2 ** -0.5 * 0.75 ** 3 / 9)
    zs = zeros_near_lattice(theta_blmap(9, [1.25, 1.5]), C, [9.0, -9.0])
    assert len(zs) == 1 and zs[0].nu > 3 / 9


def test_single_tile_close_to_theta():
    chi1, K1, _ = make_chi1(DELTA, 4, 1)
    C = theta_constants(9, [1.25], chi1)
    T = TilingMap({(0,): Polytope.interval(-1000, 1000)}, Polytope.interval(-1000, 1000), C, chi1)
    z = np.array([[0.3 + 0.4j], [9.0], [-50 - 0.9j]])
    d = np.abs(T.values(z)[:, 0] - ThetaMap(9, [1.25])(z)[:, 0])
    assert np.all(d + T.edge_tail(z) < C.theta)


def test_phi_bound_real(tiling1):
    T, C, _, K1 = tiling1
    x = np.linspace(-2400, 2400, 40001)
    assert np.abs(T.values(x[:, None])).max() <= math.sqrt(1) * K1 + T.quad_error


def test_phi_support_box(tiling1):
    T, C, _, _ = tiling1
    box = T.map.funcs[0].freqbox
    a = 1.0
    assert box.lo[0] > a / 2 and box.hi[0] < a / 2 + DELTA / 2


def test_phi_translate(tiling1):
    T, C, _, _ = tiling1
    T2 = T.translated([3])
    rng = np.random.default_rng(5)
    z = rng.uniform(-1500, 1500, 20) + 1j * rng.uniform(-1, 1, 20)
    assert np.allclose(T2.values((z + 3)[:, None]), T.values(z[:, None]), atol=1e-12)


def test_phi_derivative_fd(tiling1):
    T, _, _, _ = tiling1
    rng = np.random.default_rng(6)
    z = (rng.uniform(-1500, 1500, 100) + 1j * rng.uniform(-1, 1, 100))[:, None]
    J = T.jacobian(z)[:, 0, 0]
    h = 1e-4
    fd = (T.values(z + h)[:, 0] - T.values(z - h)[:, 0]) / (2 * h)
    assert np.all(np.abs(fd - J) <= 1e-6 * np.maximum(np.abs(J), 1e-3))


def test_zeros_good_tiles(tiling1):
    T, C, _, _ = tiling1
    zs = []
    for n, P in T.tiles.items():
        for m in range(-40, 41):
            p = n[0] + 9 * m
            if P.depth(np.array([[p]]))[0] > C.E + 1:
                zs += zeros_near_lattice(T, C, [float(p)])
    assert len(zs) > 10
    rows = classify_zeros(zs, T.tiles, C)
    for zr, owner, ok in rows:
        if owner is not None:
            assert ok
            assert zr.nu > 2 / C.L


def test_tiling_check_errors():
    with pytest.raises(ValueError):
        check_tiling({(0,): Polytope.interval(0, 1), (1,): Polytope.interval(1.5, 2)}, Polytope.interval(0, 2))
    with pytest.raises(ValueError):
        check_tiling({(0,): Polytope.interval(0, 1.2), (1,): Polytope.interval(0.8, 1.6), (2,): Polytope.interval(1.6, 2)},
                     Polytope.interval(0, 2.1))


def test_tiling_map_2d_small():
    chi1 = make_chi1(DELTA, 4, 2)[0]
    C = theta_constants(9, [1.25, 1.25], chi1)
    win = Polytope.box([-60, -60], [60, 60])
    tiles = {(0, 0): Polytope.from_halfspaces([[1, 1], [-1, 0], [0, -1]], [0, 60, 60]),
             (1, 1): Polytope.from_halfspaces([[-1, -1], [1, 0], [0, 1]], [0, 60, 60])}
    T = TilingMap(tiles, win, C, chi1, budget=1.0)
    # quadrature of the full window equals the kernel mass there
    z = np.array([[0.2 + 0.1j, -0.3]])
    tot = T.values(z)
    assert np.all(np.isfinite(tot))
    J = T.jacobian(z)[0]
    h = 1e-5
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (T.values(z + e) - T.values(z - e))[0] / (2 * h)
        assert np.allclose(fd, J[:, j], rtol=1e-5, atol=1e-9)


def test_bezout_small():
    rows = bezout_demo([2, 4])
    assert rows[0][2] >= 2 and rows[1][2] >= 4
    assert bezout_demo([0])[0][2] == 0


def test_bezout_oracle():
    F = BezoutMap([3, 5])
    rows = bezout_demo([3, 5])
    # dense one-dimensional sweep on z1 = n, where f2 reduces to g_n
    for n, _, cnt, _ in rows:
        t = np.linspace(-0.95, 0.95, 40)
        w = (t[:, None] + 1j * t[None, :]).ravel()
        found = []
        for _ in range(60):
            step = F.g(n - 1, w) / F.dg(n - 1, w)
            w = w - step
        ok = np.abs(F.g(n - 1, w)) < 1e-13
        for v in w[ok & (np.abs(w) < 1)]:
            if all(abs(v - u) > 1e-6 for u in found):
                found.append(v)
        assert len(found) == cnt


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.9, 0.9), st.floats(0.0, 6.28))
def test_persistence_constant_perturbation(scale, phase):
    C = theta_constants(8, [1.5])
    c = scale * C.theta * np.exp(1j * phase)
    f = BLMap([ThetaMap(8, [1.5]).components()[0] + BLFunction.constant(1, c)])
    zs = find_zeros(f, [-8.0], 1.0, C, per_axis=5)
    inside = [z for z in zs if abs(z.z[0] + 8) < C.r1]
    assert len(inside) == 1 and inside[0].nu > 2 / 8
    assert all(abs(z.z[0] + 8) < C.r1 for z in zs if z.certified and abs(z.z[0].imag) <= 1)


def test_axis_inf_raises_when_capped():
    with pytest.raises(RuntimeError):
        _axis_inf(8, 1.5, 1e-3, n=16, max_n=16, rel=1e-12)


def test_fast_path_matches_kernel_sum(tiling1):
    T, _, _, _ = tiling1
    rng = np.random.default_rng(8)
    z = (rng.uniform(-2000, 2000, 30) + 1j * rng.uniform(-1, 1, 30))[:, None]
    assert np.allclose(T.values(z), T.map.values(z), atol=1e-13)
    assert np.allclose(T.jacobian(z), T.map.jacobian(z), atol=1e-13)


def test_local_restriction(tiling1):
    T, C, _, _ = tiling1
    loc, tail = T.local([400.0], C.E + 5, rho=1.0)
    z = np.array([[400.3 + 0.2j]])
    assert np.abs(loc.values(z) - T.values(z)).max() <= tail
    assert tail < C.theta / 2
