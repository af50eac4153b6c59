import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bandembed.interp import (
    AdmissibleFunction, Psi, S_apply, S_inverse, S_minus_id_norm, SeqOnSet, phi, psi, truncation_radius,
)
from conftest import random_admissible


def test_phi_empty_and_single(bundle1):
    b, lat, kern = bundle1
    empty = SeqOnSet(lat, np.zeros((0, 1)), [])
    assert np.all(phi(kern, empty, np.linspace(-3, 3, 7)) == 0)
    one = SeqOnSet(lat, [[5]], [0.7])
    assert phi(kern, one, np.array([5.0]))[0] == pytest.approx(0.7, abs=1e-15)


def test_phi_bound(bundle1):
    b, lat, kern = bundle1
    rng = np.random.default_rng(1)
    idx = lat.enumerate(-150, 150)[:, :]
    u = SeqOnSet(lat, idx, rng.choice([-1.0, 1.0], len(idx)))
    t = np.linspace(-60, 60, 2001)
    assert np.abs(phi(kern, u, t)).max() <= b.K0 * u.norm + 1e-9


def test_S_identity_cases(bundle1):
    b, lat, kern = bundle1
    gamma = lat.enumerate(-40, 40, which="gamma")
    rng = np.random.default_rng(2)
    u = SeqOnSet(lat, gamma, rng.normal(size=len(gamma)))
    assert np.array_equal(S_apply(kern, u).values, u.values)
    one = SeqOnSet(lat, [[3]], [2.5])
    assert S_apply(kern, one).values[0] == 2.5


def test_S_minus_id_random(bundle1):
    b, lat, kern = bundle1
    rng = np.random.default_rng(3)
    for _ in range(10):
        lam = random_admissible(lat, b.r0, rng)
        u = SeqOnSet(lat, lam, rng.uniform(-1, 1, len(lam)))
        su = S_apply(kern, u)
        assert np.abs(su.values - u.values).max() <= u.norm / 2 + 1e-12
        assert S_minus_id_norm(kern, lam) <= 0.5 + 1e-9


def test_S_inverse_rejects_non_admissible(bundle1):
    b, lat, kern = bundle1
    idx = np.arange(0, 40)[:, None]  # all of Z: neighbours 1 apart, not in 2Z
    assert S_minus_id_norm(kern, idx) > 0.5
    with pytest.raises(ValueError):
        S_inverse(kern, SeqOnSet(lat, idx, np.ones(40)))


def test_psi_interpolates_and_bound(bundle2):
    b, lat, kern = bundle2
    rng = np.random.default_rng(4)
    lam = random_admissible(lat, b.r0, rng, n_try=30, span=150)
    u = SeqOnSet(lat, lam, rng.uniform(-1, 1, len(lam)))
    ev = psi(kern, u)
    assert np.abs(ev(u.points) - u.values).max() < 1e-8
    grid = rng.uniform(-80, 80, size=(2000, 2))
    assert np.abs(ev(grid)).max() <= ev.sup_bound


def test_psi_empty(bundle1):
    b, lat, kern = bundle1
    ev = psi(kern, SeqOnSet(lat, np.zeros((0, 1)), []))
    assert np.all(ev(np.linspace(0, 1, 5)) == 0)


def test_psi_equivariance(bundle_23):
    b, lat, kern = bundle_23
    rng = np.random.default_rng(5)
    lam = random_admissible(lat, b.r0, rng, n_try=20, span=100)
    u = SeqOnSet(lat, lam, rng.uniform(-1, 1, len(lam)))
    n = 7
    a = psi(kern, u)
    s = psi(kern, u.shifted([n]))
    t = rng.uniform(-60, 60, 100)
    assert np.abs(s(t + n) - a(t)).max() < 1e-10


def test_Psi_zero_and_interpolation(bundle1):
    b, lat, kern = bundle1
    rng = np.random.default_rng(6)
    lam = random_admissible(lat, b.r0, rng, n_try=12, span=100)
    u = rng.uniform(-1, 1, len(lam))
    zero = Psi(kern, AdmissibleFunction(lat, lam, np.zeros(len(lam))), u)
    assert np.all(zero(np.linspace(-5, 5, 9)) == 0)
    p = np.where(rng.random(len(lam)) < 0.3, 0.4, 1.0)
    field = Psi(kern, AdmissibleFunction(lat, lam, p), u)
    sure = p == 1
    assert np.abs(field(lat.points(lam[sure])[:, 0]) - u[sure]).max() < 1e-8


def test_Psi_two_atom_mixture(bundle1):
    b, lat, kern = bundle1
    rng = np.random.default_rng(7)
    lam = random_admissible(lat, b.r0, rng, n_try=10, span=100)
    u = rng.uniform(-1, 1, len(lam))
    p = np.ones(len(lam))
    p[0] = 0.5
    field = Psi(kern, AdmissibleFunction(lat, lam, p), u)
    with_site = psi(kern, SeqOnSet(lat, lam, u))
    without = psi(kern, SeqOnSet(lat, lam[1:], u[1:]))
    t = np.linspace(-70, 70, 301)
    assert np.abs(field(t) - 0.5 * (with_site(t) + without(t))).max() < 1e-9


def test_Psi_exact_limit(bundle1):
    b, lat, kern = bundle1
    lam = lat.enumerate(-100, 100, which="gamma")
    p = np.full(len(lam), 0.5)
    with pytest.raises(ValueError, match="montecarlo"):
        Psi(kern, AdmissibleFunction(lat, lam, p), np.ones(len(lam)))


def test_Psi_montecarlo_close_to_exact(bundle1):
    b, lat, kern = bundle1
    rng = np.random.default_rng(8)
    lam = random_admissible(lat, b.r0, rng, n_try=8, span=80)
    u = rng.uniform(-1, 1, len(lam))
    p = np.where(np.arange(len(lam)) % 3 == 0, 0.3, 1.0)
    pf = AdmissibleFunction(lat, lam, p)
    ex = Psi(kern, pf, u)
    mc = Psi(kern, pf, u, mode="montecarlo", seed=11, nsamp=400)
    t = np.linspace(-40, 40, 41)
    se = mc.stderr(t)
    assert np.all(np.abs(mc(t) - ex(t)) <= 5 * se + 1e-12)
    mc2 = Psi(kern, pf, u, mode="montecarlo", seed=11, nsamp=400)
    assert np.array_equal(mc.coefs, mc2.coefs)


def test_truncation_radius_monotone(bundle1):
    b, lat, kern = bundle1
    r_prev = 0
    for eps in (0.2, 0.1, 0.05, 0.025):
        r, _ = truncation_radius(5.0, eps, kern)
        assert r >= r_prev
        r_prev = r
    assert np.isfinite(r_prev)


def test_truncation_window_doubling(bundle1):
    # psi on a large admissible set vs its restriction to B_r' and B_2r'
    b, lat, kern = bundle1
    eps = 0.1
    r = 3.0
    rp, info = truncation_radius(r, eps, kern)
    rng = np.random.default_rng(9)
    span = 2.2 * rp
    lam = random_admissible(lat, b.r0, rng, n_try=200, span=2 * span)
    u = rng.uniform(-1, 1, len(lam))
    pts = lat.points(lam)[:, 0]
    t = np.linspace(-r, r, 21)
    near = np.abs(pts) <= rp
    near2 = np.abs(pts) <= 2 * rp
    a = psi(kern, SeqOnSet(lat, lam[near], u[near]))(t)
    c = psi(kern, SeqOnSet(lat, lam[near2], u[near2]))(t)
    assert np.abs(a - c).max() < eps


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_interpolation_property(bundle_23, seed):
    b, lat, kern = bundle_23
    rng = np.random.default_rng(seed)
    lam = random_admissible(lat, b.r0, rng, n_try=15, span=120)
    u = SeqOnSet(lat, lam, rng.uniform(-1, 1, len(lam)))
    ev = psi(kern, u)
    assert np.abs(ev(u.points[:, 0]) - u.values).max() < 1e-7


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(-30, 30))
def test_Psi_equivariance_property(bundle1, seed, n):
    b, lat, kern = bundle1
    rng = np.random.default_rng(seed)
    lam = random_admissible(lat, b.r0, rng, n_try=8, span=80)
    u = rng.uniform(-1, 1, len(lam))
    p = np.where(rng.random(len(lam)) < 0.3, rng.uniform(0.1, 0.9, len(lam)), 1.0)
    pf = AdmissibleFunction(lat, lam, p)
    a = Psi(kern, pf, u)
    s = Psi(kern, pf.shifted([n]), u)
    t = rng.uniform(-50, 50, 100)
    assert np.abs(s(t + n) - a(t)).max() < 1e-7


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_Psi_bounded_property(bundle1, seed):
    b, lat, kern = bundle1
    rng = np.random.default_rng(seed)
    lam = random_admissible(lat, b.r0, rng, n_try=8, span=80)
    u = rng.uniform(-1, 1, len(lam))
    p = np.where(rng.random(len(lam)) < 0.3, rng.uniform(0.1, 0.9, len(lam)), 1.0)
    field = Psi(kern, AdmissibleFunction(lat, lam, p), u)
    t = np.linspace(-60, 60, 1201)
    assert np.abs(field(t)).max() <= 2 * b.K0 * np.abs(u).max() + 1e-9


def test_Psi_continuity(bundle1):
    # (p, u) and (q, v) agree on B_r'; Psi differs by < eps on B_r
    b, lat, kern = bundle1
    eps, r = 0.1, 2.0
    rp, _ = truncation_radius(r, eps, kern)
    rng = np.random.default_rng(10)
    lam = random_admissible(lat, b.r0, rng, n_try=150, span=3 * rp)
    pts = lat.points(lam)[:, 0]
    u = rng.uniform(-1, 1, len(lam))
    p = np.ones(len(lam))
    close = np.argsort(np.abs(pts))[:4]
    p[close] = 0.5
    far = np.abs(pts) > rp
    q = p.copy()
    q[far] = rng.uniform(0, 1, far.sum()) * (rng.random(far.sum()) < 0.5)
    q[far & (q > 0)] = 1.0
    v = u.copy()
    v[far] = rng.uniform(-1, 1, far.sum())
    a = Psi(kern, AdmissibleFunction(lat, lam, p), u)
    c = Psi(kern, AdmissibleFunction(lat, lam, q), v)
    t = np.linspace(-r, r, 11)
    assert np.abs(a(t) - c(t)).max() < eps
