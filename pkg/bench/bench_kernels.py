"""Compiled vs numpy kernel sums.

    python3 bench/bench_kernels.py [--repeat 3] [--json out.json]

Times group_eval / abs_group_eval on three workloads that mirror the library's
hot paths (interpolation sums, the Theta tiling map, real-line envelopes) and
checks that both backends agree.
"""
import argparse
import json
import time

import numpy as np

from bandembed import kernels
from bandembed.bandlimited import BLFunction, Factor


def workloads(rng):
    # interpolation kernel: chi0-type sinc power times sinc, 1-d
    f1 = BLFunction.kernel_sum(1, [Factor(0, "sincpow", 0.1, 4), Factor(0, "sinc", 1.5)],
                               rng.uniform(-300, 300, (600, 1)), rng.normal(size=600))
    # tiling-map shaped terms: exp * sin * sinc power on complex points
    f2 = BLFunction.kernel_sum(1, [Factor(0, "cexp", 2.125), Factor(0, "sin", 1 / 320), Factor(0, "sincpow", 0.02, 4)],
                               rng.uniform(-3000, 3000, (2000, 1)), rng.normal(size=2000) + 1j * rng.normal(size=2000))
    # separable 2-d kernel
    f3 = BLFunction.kernel_sum(2, [Factor(0, "sinc", 0.5), Factor(1, "sinc", 0.5), Factor(0, "sincpow", 0.1, 4),
                                   Factor(1, "sincpow", 0.1, 4)],
                               rng.uniform(-40, 40, (400, 2)), rng.normal(size=400))
    p1 = np.linspace(-300, 300, 4000)[:, None]
    p2 = (np.linspace(-200, 200, 2000) + 0.3j)[:, None]
    p3 = rng.uniform(-30, 30, (2000, 2))
    return [("interp 1-d", f1, p1), ("theta map", f2, p2), ("kernel 2-d", f3, p3)]


def timeit(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def run(repeat=3, seed=0):
    rng = np.random.default_rng(seed)
    have_c = True
    try:
        from bandembed import _ckernels  # noqa: F401
    except ImportError:
        have_c = False
    rows = []
    for name, f, pts in workloads(rng):
        g = f.groups[0]
        n_eval = len(pts) * len(g)
        tp, vp = timeit(lambda: g.eval(pts, backend="python"), repeat)
        row = {"workload": name, "term_evals": n_eval, "python_s": tp}
        if have_c:
            tc, vc = timeit(lambda: g.eval(pts, backend="cython"), repeat)
            row.update(cython_s=tc, speedup=tp / tc, max_abs_diff=float(np.abs(vp - vc).max()))
            if np.isrealobj(pts) or np.all(np.imag(pts) == 0):
                ta, aa = timeit(lambda: g.abs_eval(pts.real, backend="cython"), repeat)
                tb, ab = timeit(lambda: g.abs_eval(pts.real, backend="python"), repeat)
                row.update(abs_python_s=tb, abs_cython_s=ta, abs_max_diff=float(np.abs(aa - ab).max()))
        rows.append(row)
    return {"default_backend": kernels.BACKEND, "compiled_available": have_c, "rows": rows}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", help="write results here")
    args = ap.parse_args()
    res = run(args.repeat, args.seed)
    print(f"default backend: {res['default_backend']}")
    print(f"{'workload':12s} {'terms x pts':>12s} {'numpy s':>9s} {'cython s':>9s} {'speedup':>8s} {'max diff':>9s}")
    for r in res["rows"]:
        if "cython_s" in r:
            print(f"{r['workload']:12s} {r['term_evals']:12d} {r['python_s']:9.4f} {r['cython_s']:9.4f} "
                  f"{r['speedup']:8.1f} {r['max_abs_diff']:9.1e}")
        else:
            print(f"{r['workload']:12s} {r['term_evals']:12d} {r['python_s']:9.4f} {'n/a':>9s}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(res, fh, indent=1, sort_keys=True)


if __name__ == "__main__":
    main()
