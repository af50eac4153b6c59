import time
from fractions import Fraction

import numpy as np
import pytest

from bandembed.interp import InterpKernel
from bandembed.lattice import build_bundle


@pytest.fixture(scope="session")
def bundle1():
    b, lat = build_bundle(0.4, 0.5, [Fraction(1, 2)])
    return b, lat, InterpKernel(b, lat)


@pytest.fixture(scope="session")
def bundle_23():
    # rho = 2/3 gives Gamma = (3/2)Z and Gamma_1 = (1/2)Z
    b, lat = build_bundle(0.3, 0.5, [Fraction(2, 3)])
    return b, lat, InterpKernel(b, lat)


@pytest.fixture(scope="session")
def bundle2():
    b, lat = build_bundle(0.6, 0.5, [Fraction(1, 2), Fraction(1, 2)])
    return b, lat, InterpKernel(b, lat)


def random_admissible(lat, r0, rng, n_try=60, span=200.0):
    """Greedy random admissible set: accept a Gamma_1 point when it keeps admissibility."""
    from bandembed.lattice import is_admissible

    k = lat.k
    chosen = []
    for _ in range(n_try):
        p = rng.uniform(-span / 2, span / 2, size=k)
        idx = np.rint(p / lat.step1_f).astype(np.int64)
        cand = np.array(chosen + [idx])
        if any(np.array_equal(idx, c) for c in chosen):
            continue
        if is_admissible(cand, lat, r0, as_index=True)[0]:
            chosen.append(idx)
            # grow a Gamma patch next to it so that close pairs occur
            for j in range(1, 4):
                q = idx.copy()
                q[0] += j * lat.period[0]
                cand = np.array(chosen + [q])
                if any(np.array_equal(q, c) for c in chosen):
                    continue
                if is_admissible(cand, lat, r0, as_index=True)[0]:
                    chosen.append(q)
    return np.array(chosen, dtype=np.int64).reshape(-1, k)


@pytest.fixture(scope="session")
def demo():
    """Measured demo parameters and a pipeline with a build cache, shared by the slow suites."""
    from bandembed.dynsys import GOLDEN, torus_system
    from bandembed.pipeline import Pipeline, choose_params, demo_signal

    t0 = time.perf_counter()
    system = torus_system([GOLDEN])
    signal = demo_signal(system)
    params = choose_params(system, signal, mode="demo")
    pipe = Pipeline(params, system, signal)
    pipe.memo = {}
    pipe.setup_seconds = time.perf_counter() - t0
    return pipe


@pytest.fixture(scope="session")
def demo_report(demo):
    from bandembed.pipeline import verify_embedding

    t0 = time.perf_counter()
    rep = verify_embedding(demo, n_pool=72, n_pairs=1000, seed=0)
    rep.wall_seconds = time.perf_counter() - t0
    return rep


# one summary line per acceptance criterion

_CRITERIA = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1][len("test_criterion_"):]
    detail = dict(report.user_properties).get("detail", "")
    prev = _CRITERIA.get(name)
    if report.when == "call" or (report.failed and prev is None) or (report.failed and prev[0]):
        _CRITERIA[name] = (report.passed if report.when == "call" else False, detail or (prev[1] if prev else ""))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA):
        ok, detail = _CRITERIA[name]
        num, _, label = name.partition("_")
        terminalreporter.write_line(f"criterion {int(num)}: {'PASS' if ok else 'FAIL'} {label.replace('_', ' ')}"
                                    + (f" ({detail})" if detail else ""))
