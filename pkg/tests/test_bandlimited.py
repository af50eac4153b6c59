import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bandembed.bandlimited import (
    BLFunction, Factor, FreqBox, grid_sup, growth_check, in_class, make_chi0, make_chi1,
    sampling_reconstruct, sinc_pow_1d_integrals, theta_map,
)


def test_sinc_at_zero_and_integers():
    f = BLFunction.term(1, [Factor(0, "sinc", 1.0)])
    assert f(0.0) == pytest.approx(1.0, abs=1e-15)
    rho = 0.75
    g = BLFunction.term(1, [Factor(0, "sinc", rho)])
    n = np.array([1, 2, -3, 7]) / rho
    assert np.abs(g(n)).max() < 1e-15


def test_theta_entry_at_i():
    b, L = 1.3, 5
    th = theta_map(L, [b])
    expected = 1j * math.exp(-math.pi * b) * math.sinh(math.pi / L)
    assert th(np.array([1j]))[0] == pytest.approx(expected, rel=1e-13)
    comp = th.components()[0]
    assert comp(1j) == pytest.approx(expected, rel=1e-13)


def test_real_complex_agree():
    rng = np.random.default_rng(0)
    f = make_chi0(0.7, 4, 2) + BLFunction.term(2, [Factor(0, "cos", 0.3), Factor(1, "sin", 0.2)], [0.5, -1], 0.4)
    t = rng.normal(size=(100, 2)) * 5
    assert np.abs(f(t) - f(t + 0j)).max() < 1e-14


def test_chi0_normalization_and_support():
    for k in (1, 2, 3):
        tau, m = 0.6, 4
        c = make_chi0(tau, m, k)
        assert abs(c(np.zeros(k)) - 1) < 1e-12
        b = tau / (m * math.sqrt(k))
        assert c.freqbox.hi[0] == pytest.approx(m * b / 2)
        assert c.freqbox.radius() == pytest.approx(tau / 2)
        assert c.freqbox.within_ball(tau / 2)


def test_chi0_envelope():
    tau, m = 0.5, 4
    c = make_chi0(tau, m, 1)
    b = tau / m
    t = np.linspace(0.5, 300, 5000)
    assert np.all(np.abs(c(t)) <= (np.pi * b * t) ** (-m) * (1 + 1e-12) + 1e-300)


def test_chi0_rejects_m_below_2():
    with pytest.raises(ValueError):
        make_chi0(0.5, 1, 1)


def test_chi1_normalization():
    for k in (1, 2):
        chi1, K1, err = make_chi1(0.5, 4, k)
        assert chi1.freqbox.within_ball(0.5 / 8)
        # integral of the normalized kernel: per-axis integral of sinc(bt)^4 is (2/3)/b
        b = chi1.groups[0].factors[0].b
        total = complex(chi1.groups[0].coefs[0]).real * ((2 / 3) / b) ** k
        assert total == pytest.approx(1.0, abs=1e-9)
        assert K1 >= 1.0 - 1e-12


def test_sinc_power_integrals_oracle():
    # oracle: closed forms for m = 2, 4 and an mpmath cell-by-cell value for |sinc|^3
    s2, a2, e2 = sinc_pow_1d_integrals(2)
    assert s2 == pytest.approx(1.0, abs=1e-8)
    s4, a4, e4 = sinc_pow_1d_integrals(4)
    assert s4 == pytest.approx(2 / 3, abs=1e-11)
    s3, a3, e3 = sinc_pow_1d_integrals(3)
    assert s3 == pytest.approx(0.75, abs=1e-9)
    assert a3 == pytest.approx(0.769319477564705, abs=1e-9)
    assert e4 < 1e-8


def test_K1_dual_quadrature_k1():
    _, K1, err = make_chi1(0.5, 4, 1)
    assert err < 1e-8
    assert K1 == pytest.approx(1.0, abs=1e-8)


def test_theta_vanishes_and_derivative():
    th = theta_map(6, [1.2, 0.9])
    n = np.array([[6, -12], [0, 18], [-6, 6]], dtype=complex)
    assert np.abs(th(n)).max() < 1e-14
    d0 = th.jac_diag(np.zeros((1, 2)))
    assert np.allclose(d0, np.pi / 6)
    # derivative against central differences
    z = np.array([[0.3 + 0.2j, -1.1 + 0.5j]])
    h = 1e-6
    for j in range(2):
        e = np.zeros((1, 2))
        e[0, j] = h
        fd = (th(z + e) - th(z - e))[0, j] / (2 * h)
        assert fd == pytest.approx(th.jac_diag(z)[0, j], rel=1e-7)


def test_theta_sup_norm_real():
    th = theta_map(4, [1.1, 0.7])
    t = np.linspace(-8, 8, 401)
    T1, T2 = np.meshgrid(t, t, indexing="ij")
    v = th(np.stack([T1.ravel(), T2.ravel()], axis=1).astype(complex))
    s = np.linalg.norm(v, axis=1).max()
    assert s <= math.sqrt(2) + 1e-12
    assert s == pytest.approx(math.sqrt(2), abs=1e-3)
    assert th.sup_real == pytest.approx(math.sqrt(2))


def test_theta_components_support():
    th = theta_map(8, [1.25])
    c = th.components()[0]
    assert c.freqbox.lo[0] == pytest.approx(1.25 / 2 - 1 / 16)
    assert c.freqbox.hi[0] == pytest.approx(1.25 / 2 + 1 / 16)


def test_gradient_matches_finite_difference():
    f = make_chi0(0.8, 3, 2).translate([0.3, -0.2]) * BLFunction.term(2, [Factor(0, "cexp", 0.4)])
    z = np.array([[0.7 + 0.1j, 1.3 - 0.2j]])
    g = f.grad(z)
    h = 1e-6
    for j in range(2):
        e = np.zeros((1, 2))
        e[0, j] = h
        fd = (f(z + e) - f(z - e)) / (2 * h)
        assert fd[0] == pytest.approx(g[0, j], rel=1e-6, abs=1e-9)


def test_sampling_zero_function():
    z = BLFunction.zero(1)
    r = sampling_reconstruct(z, 0.9, [(-50, 50)], a=[1.0])
    assert np.abs(r.func(np.linspace(-20, 20, 11))).max() == 0.0


def test_sampling_sinc_reconstruction():
    f = BLFunction.term(1, [Factor(0, "sinc", 1.0)])
    r = sampling_reconstruct(f, 0.9, [(-200, 200)])
    t = np.linspace(-100, 100, 4001)
    err = np.abs(r.func(t) - f(t)).max()
    assert err < 1e-6
    assert err <= r.tail_bound


def test_sampling_uniqueness_pair():
    # f and g = f + h agree to < 3e-9 on 0.9 Z inside the window; h lives at t = 300
    f = BLFunction.term(1, [Factor(0, "sinc", 1.0)], [3.0])
    h = BLFunction.term(1, [Factor(0, "sinc", 0.8), Factor(0, "sincpow", 0.05, 4)], [300.0])
    g = f + h
    assert in_class(g, 1.0)
    diff = f - g
    r = sampling_reconstruct(diff, 0.9, [(-100, 100)], a=[1.0])
    t = np.linspace(-50, 50, 1001)
    assert np.abs(r.samples).max() < 3e-9
    assert np.abs(r.func(t)).max() <= r.tail_bound
    assert abs(diff(300.0)) == pytest.approx(1.0)


def test_sampling_rejects_undersampling():
    f = BLFunction.term(1, [Factor(0, "sinc", 1.0)])
    with pytest.raises(ValueError):
        sampling_reconstruct(f, 1.0, [(-10, 10)])


def test_sampling_2d():
    f = BLFunction.term(2, [Factor(0, "sinc", 0.9), Factor(1, "sinc", 0.8)], [0.2, -0.4])
    r = sampling_reconstruct(f, [1.0, 1.1], [(-120, 120), (-120, 120)])
    rng = np.random.default_rng(2)
    t = rng.uniform(-30, 30, size=(200, 2))
    assert np.abs(r.func(t) - f(t)).max() < 1e-5


def test_growth_sin():
    f = BLFunction.term(1, [Factor(0, "sin", 1.0)])
    res = growth_check(f, [1j])
    assert res.ok
    assert abs(f(1j)) == pytest.approx(math.sinh(math.pi))


def test_growth_random_probes_and_negative_control():
    rng = np.random.default_rng(3)
    f = BLFunction.term(1, [Factor(0, "sinc", 1.0)], [0.4])
    z = rng.uniform(-20, 20, 200) + 1j * rng.uniform(-3, 3, 200)
    assert growth_check(f, z).ok
    bad = growth_check(f, z, a=[0.2])
    assert not bad.ok and bad.witness is not None


def test_json_roundtrip():
    f = make_chi0(0.5, 4, 2) * BLFunction.term(2, [Factor(1, "cexp", -0.3)], coef=0.5 + 0.25j)
    g = BLFunction.from_json(f.to_json())
    t = np.array([[0.3, 0.7], [-1.0, 2.0]])
    assert np.allclose(f(t), g(t), atol=0, rtol=0)


def test_overflow_flag():
    f = BLFunction.term(1, [Factor(0, "sin", 1.0)])
    v, flag = f.eval_checked(1e6j)
    assert flag


def test_backends_agree():
    rng = np.random.default_rng(4)
    f = make_chi0(0.9, 4, 2) * BLFunction.kernel_sum(2, [Factor(0, "sinc", 0.5), Factor(1, "cexp", 0.2)],
                                                     rng.normal(size=(30, 2)), rng.normal(size=30))
    z = rng.normal(size=(40, 2)) + 0.3j * rng.normal(size=(40, 2))
    a = f.eval(z, backend="python")
    b = f.eval(z, backend="cython")
    assert np.abs(a - b).max() < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 2.0), st.floats(-3, 3), st.floats(0.1, 1.5))
def test_real_valued_combinations(b, shift, beta):
    # cexp(beta) + cexp(-beta) with conjugate coefficients is real on the line
    c = 0.3 + 0.7j
    f = (BLFunction.term(1, [Factor(0, "sinc", b), Factor(0, "cexp", beta)], [shift], c)
         + BLFunction.term(1, [Factor(0, "sinc", b), Factor(0, "cexp", -beta)], [shift], np.conj(c)))
    t = np.random.default_rng(5).uniform(-50, 50, 1000)
    assert np.abs(f(t).imag).max() < 1e-10
    g = f.real_part()
    assert np.abs(g(t) - f(t).real).max() < 1e-12


@settings(max_examples=10, deadline=None)
@given(st.floats(0.2, 1.0), st.floats(0.05, 0.5), st.integers(2, 5))
def test_freqbox_conservative_dft(b, beta, m):
    # spectral mass outside the declared box (inflated by the DFT bin width) is tiny
    f = BLFunction.term(1, [Factor(0, "sincpow", b, m), Factor(0, "cos", beta)])
    n, dt = 2 ** 16, 0.25
    t = (np.arange(n) - n / 2) * dt
    win = np.hanning(n)
    spec = np.fft.fftshift(np.fft.fft(f(t).real * win))
    freq = np.fft.fftshift(np.fft.fftfreq(n, dt))
    box = f.freqbox.inflate(8 / (n * dt))
    outside = (freq < box.lo[0]) | (freq > box.hi[0])
    power = np.abs(spec) ** 2
    assert power[outside].sum() / power.sum() < 1e-6


@settings(max_examples=10, deadline=None)
@given(st.floats(0.3, 0.95))
def test_sampling_identity_inside_nyquist(a):
    f = BLFunction.term(1, [Factor(0, "sinc", a * 0.5), Factor(0, "sinc", a * 0.5)], [0.37])
    r = sampling_reconstruct(f, 1.0, [(-300, 300)], a=[a + 0.02])
    t = np.linspace(-150, 150, 601)
    assert np.abs(r.func(t) - f(t)).max() <= r.tail_bound + 1e-12


def test_freqbox_algebra():
    a = FreqBox((-1.0,), (0.5,))
    b = FreqBox((0.0,), (2.0,))
    assert a.hull(b) == FreqBox((-1.0,), (2.0,))
    assert a.minkowski(b) == FreqBox((-1.0,), (2.5,))
    with pytest.raises(ValueError):
        FreqBox((1.0,), (0.0,))


def test_grid_sup_close_to_one():
    assert grid_sup(make_chi0(0.5, 4, 1), [(-5, 5)]) == pytest.approx(1.0)
