import json
import math

import numpy as np
import pytest

from bandembed.bandlimited import BLFunction, Factor
from bandembed.dynsys import GOLDEN, torus_system
from bandembed.interp import AdmissibleFunction, Psi
from bandembed.pipeline import (
    ParamError, PipelineParams, beta1, beta2, choose_params, demo_signal, discretize, freq_audit, psi_schur,
    shifted_center_equivariance, spectral_boxes, undiscretize_check,
)

S1 = torus_system([GOLDEN])


def pool(pipe, report, count):
    return [pipe.build(p["x"], 0) for p in report.points[:count]]


# parameter selection

def test_strict_mode_rejects_desk_scale():
    with pytest.raises(ParamError, match="c1 A > 2 dim CQ"):
        choose_params(S1, demo_signal(S1), mode="strict", measure=False)


def test_demo_mode_logs_the_substituted_conditions():
    P = choose_params(S1, demo_signal(S1), mode="demo", measure=False)
    failed = {e["check"] for e in P.log if not e["ok"]}
    assert failed == {"c1 A > 2 dim CQ", "L > 1000^k (A+1)(L0+1+sqrt k)"}
    # c1 = rho/2 - 2 c0 / N, and c1 A > 4 needs A > 4 / c1
    assert P.c1 == pytest.approx(0.75 - 0.5)
    assert 4 / P.c1 == pytest.approx(16.0)
    assert P.b == pytest.approx(P.a + P.delta / 2)
    assert 4 * P.K0 * P.delta_p < P.delta


@pytest.mark.parametrize("bad, msg", [
    ({"delta": 2.5}, "delta < min"),
    ({"F_delta": 0.01}, "F_delta"),
    ({"rho": 1.8}, "rho \\+ tau"),
    ({"N": 13}, "rho N integer"),
    ({"L": 10}, "L > 4 / delta"),
])
def test_unsatisfiable_constants_are_named(bad, msg):
    with pytest.raises(ParamError, match=msg):
        choose_params(S1, demo_signal(S1), measure=False, **bad)


def test_unknown_mode():
    with pytest.raises(ParamError):
        choose_params(S1, measure=False, mode="loose")


def test_measured_demo_params(demo):
    P = demo.P
    assert P.R0 in P.r0_schedule
    assert P.R % P.N == 0 and P.R > P.R0
    measured = {e["check"]: e for e in P.log}
    for name in ("M: level-1 boundary zone density < 1/(6A+2)", "R0 tax inequality (measured)",
                 "nonzero-weight count inequality (measured)", "R in N Z, R > R0, tiles inside [-R, R)"):
        assert measured[name]["ok"], measured[name]
    assert json.loads(json.dumps(P.to_dict()))["R"] == P.R


# fields

def test_ramps():
    assert beta1(2.0, 2.0) == 0 and beta1(3.0, 2.0) == 1 and beta1(2.5, 2.0) == 0.5
    assert beta2(12.0, 12, 5.0) == 0 and beta2(17.0, 12, 5.0) == 1


def test_fields_on_twenty_points(demo, demo_report):
    P = demo.P
    for e in pool(demo, demo_report, 20):
        owned = e.tile != np.iinfo(np.int64).min
        assert np.all(e.p[e.dist <= P.r0] == 0)
        assert np.all(e.p[owned & (e.dist >= P.r0 + 1)] == 1)
        assert np.all(e.u[e.dist <= P.N] == 0)
        assert np.abs(e.u).max() < P.delta_p
        pf = AdmissibleFunction(demo.lattice, e.sites[:, None], e.p)
        assert pf.check(P.r0)[0]
        assert e.psi.n_fractional <= 20


def test_g_bounds_on_twenty_points(demo, demo_report):
    P = demo.P
    for e in pool(demo, demo_report, 20):
        assert np.abs(e.g1_vals - e.f_vals).max() < 2 * P.K0 * P.delta_p
        assert np.abs(e.g2_vals).max() <= P.delta / 2
        assert np.abs(e.g_vals - e.f_vals).max() < P.delta


def test_psi_schur_matches_exact_mode(demo, demo_report):
    e = pool(demo, demo_report, 1)[0]
    pf = AdmissibleFunction(demo.lattice, e.sites[:, None], e.p)
    ref = Psi(demo.kern, pf, e.u, mode="exact")
    fast = psi_schur(demo.kern, pf, e.u)
    t = np.linspace(-150, 150, 401)[:, None]
    assert np.abs(ref(t) - fast(t)).max() < 1e-12
    assert fast.n_fractional == ref.n_fractional


def test_spectral_boxes_disjoint():
    P = PipelineParams()
    low, hi, nhi = spectral_boxes(P)
    assert hi.lo[0] > nhi.hi[0]
    assert low.hi[0] <= hi.lo[0] and nhi.hi[0] <= low.lo[0]


def test_frequency_audit_single_point(demo, demo_report):
    a = freq_audit(pool(demo, demo_report, 1)[0])
    assert a["ok"] and a["g1_box"][1] <= demo.P.a / 2 < a["g2_box"][0]


# equivariance

def test_equivariance_shifted_center(demo, demo_report):
    rng = np.random.default_rng(7)
    probes = np.linspace(-60, 60, 100)
    worst = 0.0
    for p in demo_report.points[:10]:
        n = int(rng.integers(-40, 41))
        worst = max(worst, shifted_center_equivariance(demo, p["x"], n, probes))
    assert worst < 1e-6


def test_equivariance_same_center_within_budget(demo, demo_report):
    # both windows anchored at 0: only truncation differs
    x = demo_report.points[0]["x"]
    n = 5
    a = demo.build((x + n * demo.alpha) % 1.0, 0)
    b = demo.build(x, 0)
    probes = np.linspace(-40, 40, 100)
    err = float(np.abs(a.g(probes) - b.g(probes + n)).max())
    assert err < 10 * demo_report.budget["total"]


def test_same_point_gives_zero_difference(demo, demo_report):
    e = pool(demo, demo_report, 1)[0]
    again = demo.build(e.x, 0, override=e)
    assert np.array_equal(e.g_vals, again.g_vals)


def test_constructed_case1_pair(demo_report):
    cons = demo_report.cases["constructed"]
    assert len(cons) >= 1
    for c in cons:
        assert c["f_diff"] < 1e-12 and c["g2_diff"] == 0.0
        assert c["certified"] and c["sup_diff"] > 10 * demo_report.budget["total"]


def test_report_serialises(demo_report):
    d = json.loads(demo_report.to_json())
    assert d["schema_version"] == 1 and len(d["pairs"]) == len(demo_report.pairs)
    rows = demo_report.pairs_csv().splitlines()
    assert rows[0] == "i,j,x,y,d,sup_diff,case" and len(rows) == len(demo_report.pairs) + 1


# discretisation

def _band_one(shift, coef):
    return BLFunction.term(1, [Factor(0, "sinc", 1.0)], shift=[shift], coef=coef).real_part()


def test_discretize_zero():
    assert np.all(discretize(BLFunction.zero(1), 3, range(-5, 5)) == 0)


def test_discretize_reconstructs_within_tail():
    phi = _band_one(0.3, 0.8) + _band_one(-2.1, -0.4)
    err, tail, disc = undiscretize_check(phi, 2, -150, 150)
    assert disc.shape == (300, 2)
    assert err <= tail and tail < 1e-4


def test_discretize_separates_distinct_functions():
    phi = _band_one(0.3, 0.8)
    psi = _band_one(0.3, 0.8) + _band_one(40.0, 1e-3)
    a = discretize(phi, 2, range(-60, 60))
    b = discretize(psi, 2, range(-60, 60))
    assert np.abs(a - b).max() > 1e-4


def test_discretize_g_image(demo, demo_report):
    e = pool(demo, demo_report, 1)[0]
    D = math.ceil(demo.P.a + demo.P.delta)
    disc = discretize(e.g1 + e.g2, D, range(-20, 20))
    assert disc.shape == (40, D) and np.abs(disc).max() < 1
    assert disc[20, 0] == pytest.approx(float(e.g(np.array([0.0]))[0]), abs=1e-12)
