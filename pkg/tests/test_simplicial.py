import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bandembed.simplicial import (
    Complex, ConeComplex, JitteredProductMap, ProductComplex, VertexMap, approximate, certify_injective,
    eval_G, generic_perturb, refine_points, sample_injectivity, splitmix64, staircase, subdivide,
)


def circle_points(xs, n):
    e = np.floor(xs * n).astype(int) % n
    b = xs * n - np.floor(xs * n)
    return np.stack([e, (e + 1) % n], 1), np.stack([1 - b, b], 1)


def test_subdivide_counts():
    c = Complex.circle(5)
    s, idx = subdivide(c)
    assert s.n_vertices == 10 and len(s.maximal) == 10 and s.dim == 1
    t, _ = subdivide(Complex.simplex(2))
    assert t.n_vertices == 7 and len(t.maximal) == 6 and t.is_nondegenerate()


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 1), min_size=3, max_size=3))
def test_refine_preserves_position(w):
    cx = Complex.simplex(2)
    w = np.array(w) / sum(w)
    s, idx = subdivide(cx)
    v, nw = refine_points(np.array([[0, 1, 2]]), w[None, :], idx)
    assert nw.sum() == pytest.approx(1.0) and np.all(nw >= 0)
    pos = nw[0] @ s.coords[v[0]]
    assert np.allclose(pos, w @ cx.coords)


def test_approximation_lemma():
    f = lambda y: np.stack([np.cos(2 * np.pi * 2 * y + k) for k in range(5)], 1)  # noqa: E731
    rng = np.random.default_rng(0)
    xs = np.sort(rng.random(8000))
    V, W = circle_points(xs, 8)
    delta = 0.08
    res = approximate(Complex.circle(8), V, W, f(xs), delta, max_rounds=10)
    assert res.error < delta and res.rounds > 0
    # held out samples, located in the refined complex through the same refinement
    cx = Complex.circle(8)
    held = rng.random(1000)
    hv, hw = circle_points(held, 8)
    for _ in range(res.rounds):
        cx, idx = subdivide(cx)
        hv, hw = refine_points(hv, hw, idx)
    assert np.abs(res.vmap.eval(hv, hw) - f(held)).max() < 2 * delta


def test_approximation_cap_and_modulus():
    f = lambda y: np.stack([np.cos(2 * np.pi * 40 * y)], 1)  # noqa: E731
    xs = np.linspace(0, 1, 4000, endpoint=False)
    V, W = circle_points(xs, 8)
    with pytest.raises(RuntimeError):
        approximate(Complex.circle(8), V, W, f(xs), 0.01, max_rounds=2)
    with pytest.raises(ValueError):
        approximate(Complex.circle(8), V, W, f(xs), 0.01, close_pairs=np.array([[0, 50]]))


def test_cone_rule():
    base = Complex.circle(4)
    F = VertexMap(base, np.arange(8.0).reshape(4, 2))
    cone = ConeComplex(base)
    CF = cone.extend(F)
    v, w = cone.point([0.25], [[1, 2]], [[0.5, 0.5]])
    assert np.allclose(CF.eval(v, w), eval_G(F, [0.25], [[1, 2]], [[0.5, 0.5]]))
    assert cone.dim == 2 and cone.complex.n_vertices == 5


def test_certificate_negative_control():
    # images on a line in R^4: two disjoint edges cross
    cx = Complex.circle(4)
    img = np.zeros((4, 4))
    img[:, 0] = [0, 2, 1, 3]
    cert = certify_injective(img, cx.faces(), range(4))
    assert not cert.ok and any(f[0] == "distance" for f in cert.failures)
    with pytest.raises(RuntimeError):
        generic_perturb(VertexMap(cx, img), [(cx.faces(), range(4))], eta=0.0, retries=3)


def test_certificate_shared_face_fold():
    # two triangles folded onto each other along a shared edge
    img = np.array([[0, 0, 0, 0, 0], [1, 0, 0, 0, 0], [0, 1, 0, 0, 0], [0, 0.5, 0, 0, 0]], dtype=float)
    cert = certify_injective(img, [(0, 1, 2), (0, 1, 3)], range(5))
    assert not cert.ok and ("angle", (0, 1, 2), (0, 1, 3)) in cert.failures
    img[3] = [0, 0, 1, 0, 0]
    assert certify_injective(img, [(0, 1, 2), (0, 1, 3)], range(5)).ok


def test_perturb_dimension_guard():
    cx = Complex.circle(5)
    with pytest.raises(ValueError):
        generic_perturb(VertexMap(cx, np.zeros((5, 2))), [(cx.faces(), [0, 1])], eta=0.1)


def test_perturb_100_seeds_into_r3():
    cx = Complex.circle(6)
    base = np.zeros((6, 3))
    for seed in range(100):
        res = generic_perturb(VertexMap(cx, base), [(cx.faces(), range(3))], eta=0.5, seed=seed)
        assert res.certificates[0].ok and res.max_shift <= 0.5


def test_perturb_deterministic_and_sampling_witness():
    cx = Complex.circle(7)
    sub, _ = subdivide(ConeComplex(cx).complex)
    img = np.zeros((sub.n_vertices, 5))
    a = generic_perturb(VertexMap(sub, img), [(sub.faces(), range(5))], eta=0.1, seed=4)
    b = generic_perturb(VertexMap(sub, img), [(sub.faces(), range(5))], eta=0.1, seed=4)
    assert np.array_equal(a.vmap.images, b.vmap.images)
    assert sample_injectivity(a.vmap, sub.maximal, range(5), n_pairs=10_000) > 0


def test_staircase_products():
    e = Complex.simplex(1)
    assert len(ProductComplex([e, e]).complex().maximal) == 2
    assert len(ProductComplex([e, e, e]).complex().maximal) == 6
    t = Complex.simplex(2)
    assert len(ProductComplex([t, e]).complex().maximal) == 3
    with pytest.raises(ValueError):
        ProductComplex([t, t, t, e])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(st.floats(0, 1), min_size=2, max_size=3), min_size=1, max_size=3))
def test_staircase_reproduces_point(ws):
    ws = [np.array(w) / sum(w) if sum(w) > 0 else np.r_[1.0, np.zeros(len(w) - 1)] for w in ws]
    parts = staircase(ws)
    assert sum(p[1] for p in parts) == pytest.approx(1.0)
    for f, w in enumerate(ws):
        marg = np.zeros(len(w))
        for vt, wt in parts:
            marg[vt[f]] += wt
        assert np.allclose(marg, w)
    # consecutive vertices differ in exactly one factor, one step forward
    for (a, _), (b, _) in zip(parts, parts[1:]):
        assert sum(y - x for x, y in zip(a, b)) >= 1 and all(y >= x for x, y in zip(a, b))


def test_splitmix_reference():
    # reference values of the standard splitmix64 stream seeded at 0
    x = 0
    out = []
    for _ in range(3):
        out.append(int(splitmix64(np.uint64(x))))
        x = (x + 0x9E3779B97F4A7C15) % (1 << 64)
    assert out == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_jitter_bounded_continuous_and_apex_free():
    J = JitteredProductMap(0.01, seed=3)
    coords = list(range(-5, 25))
    slots = [(0, 4, [None, 7, 8], np.array([0.2, 0.5, 0.3])), (1, -2, [None, 1, 2], np.array([0.6, 0.1, 0.3]))]
    v = J.value(slots, coords)
    assert np.abs(v).max() <= 0.01
    nudged = [(k, s, vid, w + np.array([-1e-9, 1e-9, 0])) for k, s, vid, w in slots]
    assert np.abs(J.value(nudged, coords) - v).max() < 1e-8
    # all slots at the apex: key 0 for everyone, so the value does not depend on slot labels
    apex = [(0, 9, [None, 1, 2], np.array([1.0, 0, 0])), (1, 3, [None, 4, 5], np.array([1.0, 0, 0]))]
    apex2 = [(0, 1, [None, 6, 2], np.array([1.0, 0, 0]))]
    assert np.array_equal(J.value(apex, coords), J.value(apex2, coords))


def test_jitter_is_simplicial():
    J = JitteredProductMap(0.5, seed=1)
    coords = [0, 1, 2]
    vids = [[None, 10, 11], [None, 20, 21]]
    corners = {}
    for a, b in itertools.product(range(3), range(3)):
        wa = np.eye(3)[a]
        wb = np.eye(3)[b]
        corners[(a, b)] = J.value([(0, 0, vids[0], wa), (1, 0, vids[1], wb)], coords)
    w1, w2 = np.array([0.2, 0.3, 0.5]), np.array([0.4, 0.4, 0.2])
    expect = sum(wt * corners[vt] for vt, wt in staircase([w1, w2]))
    assert np.allclose(J.value([(0, 0, vids[0], w1), (1, 0, vids[1], w2)], coords), expect)
