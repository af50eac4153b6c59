"""Command-line front door: module suites and demos with JSON/CSV artifacts.

    bandembed [--config cfg.json] [--seed N] [--out DIR] [--mode demo|strict] suite [--filter MODULE]
    bandembed [...] demo {interp,sampling,tiling,bezout,welfare,embed}

Every run writes manifest.json (config hash, versions, seeds, wall time) next to
its reports; the reports themselves carry no timestamps, so identical
config + seed gives byte-identical report files.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import platform
import subprocess
import sys
import time
import xml.etree.ElementTree as ET
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__

SCHEMA_VERSION = 1
SUITES = ["bandlimited", "lattice", "interp", "convexgeom", "tilingmap", "dynsys", "voronoi", "welfare",
          "simplicial", "pipeline", "cli", "acceptance"]
MODULE_SUITES = SUITES[:-2]
DEMOS = ["interp", "sampling", "tiling", "bezout", "welfare", "embed"]

# config keys and their defaults; anything else is a schema error
CONFIG_DEFAULTS = {
    "system": "circle",
    "alpha": None,
    "a": 2.0,
    "delta": 0.25,
    "mode": "demo",
    "seed": 0,
    "window": 300,
    "Npairs": 1000,
    "n_pool": 72,
    "instances": 20,
    "bezout_alpha": [2, 4],
    "params": {},
}


class ConfigError(ValueError):
    pass


def load_config(path=None, seed=None, mode=None):
    cfg = dict(CONFIG_DEFAULTS)
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(raw) - set(CONFIG_DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg.update(raw)
    if seed is not None:
        cfg["seed"] = seed
    if mode is not None:
        cfg["mode"] = mode
    _validate(cfg)
    return cfg


def _validate(cfg):
    from .pipeline import PipelineParams

    if cfg["system"] not in ("circle", "torus2"):
        raise ConfigError(f"system must be 'circle' or 'torus2', got {cfg['system']!r}")
    if cfg["mode"] not in ("demo", "strict"):
        raise ConfigError(f"mode must be 'demo' or 'strict', got {cfg['mode']!r}")
    if not isinstance(cfg["seed"], int) or not 0 <= cfg["seed"] < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    for key in ("Npairs", "n_pool", "instances", "window"):
        if not isinstance(cfg[key], int) or cfg[key] < 0:
            raise ConfigError(f"{key} must be a non-negative integer")
    for key in ("a", "delta"):
        if not isinstance(cfg[key], (int, float)) or cfg[key] <= 0:
            raise ConfigError(f"{key} must be a positive number")
    if not isinstance(cfg["params"], dict):
        raise ConfigError("params must be an object")
    allowed = {f.name for f in fields(PipelineParams)} - {"mode", "seed", "log", "a", "delta"}
    bad = sorted(set(cfg["params"]) - allowed)
    if bad:
        raise ConfigError(f"unknown params keys: {', '.join(bad)}")


def config_hash(cfg):
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def _versions():
    import scipy

    from .kernels import BACKEND
    return {"bandembed": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version(), "kernel_backend": BACKEND}


def dump_json(obj):
    from .pipeline import _clean

    return json.dumps(_clean(obj), sort_keys=True, indent=1) + "\n"


class Run:
    """Output directory bookkeeping: reports plus one manifest per run."""

    def __init__(self, out, cfg, command):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.cfg = cfg
        self.command = command
        self.files = []
        self.t0 = time.time()

    def write(self, name, text):
        (self.out / name).write_text(text)
        self.files.append(name)

    def write_json(self, name, obj):
        self.write(name, dump_json({"schema_version": SCHEMA_VERSION, **obj}))

    def write_csv(self, name, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(r)
        self.write(name, buf.getvalue())

    def finish(self, status):
        manifest = {"schema_version": SCHEMA_VERSION, "command": self.command, "config": self.cfg,
                    "config_hash": config_hash(self.cfg), "versions": _versions(),
                    "seeds": {"master": self.cfg["seed"]}, "files": sorted(self.files), "status": status,
                    "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"), "wall_seconds": round(time.time() - self.t0, 3)}
        (self.out / "manifest.json").write_text(dump_json(manifest))


def _system(cfg):
    from .dynsys import GOLDEN, torus_system

    if cfg["alpha"] is not None:
        return torus_system(list(cfg["alpha"]))
    return torus_system([GOLDEN]) if cfg["system"] == "circle" else torus_system([GOLDEN, 2 ** 0.5 - 1])


# suite

def _tests_dir():
    here = Path(__file__).resolve()
    for parent in here.parents:
        if (parent / "tests" / "test_acceptance.py").exists():
            return parent / "tests"
    return None


def cmd_suite(cfg, run: Run, only=None):
    tdir = _tests_dir()
    if tdir is None:
        print("error: test directory not found (suites need a source checkout)", file=sys.stderr)
        return 2
    names = [only] if only else MODULE_SUITES
    summary = {}
    failed = False
    for name in names:
        path = tdir / f"test_{name}.py"
        xml = run.out / f"junit_{name}.xml"
        proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", str(path),
                               f"--junitxml={xml}"], capture_output=True, text=True, cwd=tdir.parent)
        counts = {"passed": 0, "failed": 0, "errors": 0, "skipped": 0}
        if xml.exists():
            root = ET.parse(xml).getroot()
            suite = root if root.tag == "testsuite" else root.find("testsuite")
            total = int(suite.get("tests", 0))
            counts = {"failed": int(suite.get("failures", 0)), "errors": int(suite.get("errors", 0)),
                      "skipped": int(suite.get("skipped", 0))}
            counts["passed"] = total - counts["failed"] - counts["errors"] - counts["skipped"]
            xml.unlink()
        ok = proc.returncode == 0
        failed |= not ok
        summary[name] = {**counts, "ok": ok}
        print(f"{name:12s} {'ok' if ok else 'FAIL'}  {counts['passed']} passed, {counts['failed']} failed")
    run.write_json("suite.json", {"suites": summary, "ok": not failed})
    return 1 if failed else 0


# demos

def demo_interp(cfg, run: Run):
    from .interp import InterpKernel, S_minus_id_norm, SeqOnSet, psi
    from .lattice import build_bundle, is_admissible

    bundle, lat = build_bundle(0.4, 0.5, [0.5])
    kern = InterpKernel(bundle, lat)
    rng = np.random.default_rng(cfg["seed"])
    period = int(lat.period[0])
    step = float(lat.step1_f[0])
    rows = []
    for i in range(cfg["instances"]):
        # a few Gamma patches, far enough apart to be admissible
        idx = []
        start = 0
        for _ in range(int(rng.integers(1, 4))):
            gap = int(np.ceil(bundle.r0 / step)) + 1
            start += int(rng.integers(gap, gap + 4 * period))
            size = int(rng.integers(1, 6))
            idx.extend(start + period * np.arange(size))
            start = idx[-1]
        idx = np.array(idx, dtype=np.int64)[:, None]
        assert is_admissible(idx, lat, bundle.r0, as_index=True)[0]
        u = rng.uniform(-1, 1, len(idx))
        u /= np.abs(u).max()
        ev = psi(kern, SeqOnSet(lat, idx, u))
        err = float(np.abs(np.real(ev(lat.points(idx))) - u).max())
        rows.append([i, len(idx), f"{S_minus_id_norm(kern, idx):.6e}", f"{err:.3e}"])
    run.write_csv("interp.csv", ["instance", "n_sites", "norm_S_minus_id", "interp_error"], rows)
    worst = max(float(r[2]) for r in rows) if rows else 0.0
    run.write_json("interp.json", {"K0": bundle.K0, "r0": bundle.r0, "max_norm": worst, "bound": 0.5,
                                   "ok": worst <= 0.5 + 1e-9})
    return 0


def demo_sampling(cfg, run: Run):
    from .bandlimited import BLFunction, Factor, sampling_reconstruct

    rng = np.random.default_rng(cfg["seed"])
    f = BLFunction.kernel_sum(1, [Factor(0, "sinc", 1.0)], rng.uniform(-20, 20, (6, 1)), rng.normal(size=6))
    W = float(cfg["window"])
    t = np.linspace(-W / 2, W / 2, 2001)
    rows = []
    for factor in (1.02, 1.05, 1.1, 1.25, 1.5, 2.0, 3.0):
        r = sampling_reconstruct(f, 1.0 / factor, [(-W, W)], a=[1.0])
        err = float(np.abs(r.func(t) - f(t)).max())
        rows.append([factor, f"{1.0 / factor:.6f}", f"{err:.3e}", f"{r.tail_bound:.3e}"])
    run.write_csv("sampling.csv", ["oversampling", "step", "max_error", "tail_bound"], rows)
    return 0


def demo_tiling(cfg, run: Run):
    from .convexgeom import Polytope
    from .dynsys import build_marker
    from .voronoi import level1_tiles

    S = _system(cfg)
    k = S.k
    rng = np.random.default_rng(cfg["seed"])
    marker = build_marker(S, 40 if k == 1 else 6)
    x = rng.random(k)
    W = cfg["window"] if k == 1 else min(cfg["window"], 40)
    snap = level1_tiles(S, marker, x, Polytope.box([-W] * k, [W] * k))
    run.write_json("tiling.json", {"M": marker.M, "M1": marker.M1, "x": x.tolist(), "snapshot": snap.to_dict()})
    run.write_csv("tiles.csv", ["key", "n_vertices", "volume"],
                  [[" ".join(map(str, key)), len(snap.tiles[key].vertices), f"{snap.tiles[key].volume():.9f}"]
                   for key in snap.keys()])
    return 0


def demo_bezout(cfg, run: Run):
    from .tilingmap import bezout_demo

    rows = bezout_demo(list(cfg["bezout_alpha"]))
    run.write_csv("bezout.csv", ["n", "alpha_n", "zeros", "cumulative"], rows)
    ok = all(cnt == a for _, a, cnt, _ in rows)
    run.write_json("bezout.json", {"alpha": list(cfg["bezout_alpha"]), "rows": rows, "counts_match_alpha": ok})
    return 0


def demo_welfare(cfg, run: Run):
    from .convexgeom import Polytope
    from .dynsys import build_marker
    from .voronoi import level1_tiles
    from .welfare import allocate, conservation_error, verify_properties

    S = _system(cfg)
    k = S.k
    rng = np.random.default_rng(cfg["seed"])
    marker = build_marker(S, 5 if k == 1 else 4)
    W = cfg["window"] if k == 1 else min(cfg["window"], 30)
    A, L0, R0 = (0.25, 1.0, 16) if k == 1 else (0.5, 0.5, 4)
    rows, ok = [], True
    tables = []
    for i in range(max(1, cfg["instances"] // 4)):
        x = rng.random(k)
        tab = allocate(level1_tiles(S, marker, x, Polytope.box([-W] * k, [W] * k)), A, L0, R0)
        rep = verify_properties(tab)
        ok &= rep.ok
        rows.append([i, " ".join(f"{v:.12f}" for v in x), len(tab.keys), int((tab.w > 0).sum()),
                     f"{conservation_error(tab):.3e}", rep.ok])
        tables.append(tab.to_dict())
    run.write_csv("welfare.csv", ["snapshot", "x", "tiles", "nonzero_weights", "conservation_error", "ok"], rows)
    run.write_json("welfare.json", {"A": A, "L0": L0, "R0": R0, "tables": tables, "ok": bool(ok)})
    return 0 if ok else 1


def demo_embed(cfg, run: Run):
    from .pipeline import ParamError, Pipeline, choose_params, demo_signal, verify_embedding

    S = _system(cfg)
    if S.k != 1:
        print("error: the embedding pipeline runs on circle rotations only", file=sys.stderr)
        return 2
    signal = demo_signal(S, cfg["a"], cfg["delta"])
    try:
        P = choose_params(S, signal, mode=cfg["mode"], a=cfg["a"], delta=cfg["delta"], seed=cfg["seed"],
                          **cfg["params"])
    except ParamError as e:
        run.write_json("params.json", {"error": str(e)})
        print(f"parameter error: {e}", file=sys.stderr)
        return 1
    pipe = Pipeline(P, S, signal)
    pipe.memo = {}
    n_pool = cfg["n_pool"] if cfg["Npairs"] > 0 else 0
    rep = verify_embedding(pipe, n_pool=n_pool, n_pairs=cfg["Npairs"], seed=cfg["seed"])
    run.write("report.json", rep.to_json() + "\n")
    run.write("pairs.csv", rep.pairs_csv())
    run.write_json("params.json", {"params": P.to_dict()})
    if n_pool:
        e = pipe.build(rep.points[0]["x"], 0)
        run.write_json("tiling.json", {"x": e.x, "level1": e.level1.to_dict(), "level2": e.level2.to_dict()})
    ok = all(rep.criteria.values())
    print(json.dumps(rep.criteria, sort_keys=True))
    return 0 if ok else 1


DEMO_FUNCS = {"interp": demo_interp, "sampling": demo_sampling, "tiling": demo_tiling, "bezout": demo_bezout,
              "welfare": demo_welfare, "embed": demo_embed}


def build_parser():
    # shared flags may go before or after the subcommand; SUPPRESS keeps the
    # subparser from overwriting a value given earlier
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON run config")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (unsigned 64-bit)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default: ./bandembed-out)")
    common.add_argument("--mode", choices=["strict", "demo"], default=argparse.SUPPRESS)
    p = argparse.ArgumentParser(prog="bandembed", parents=[common], description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("suite", parents=[common], help="run module property suites")
    s.add_argument("--filter", choices=SUITES, help="run one suite only")
    d = sub.add_parser("demo", parents=[common], help="run a demo and write its artifacts")
    d.add_argument("name", choices=DEMOS)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        cfg = load_config(getattr(args, "config", None), getattr(args, "seed", None), getattr(args, "mode", None))
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    out = getattr(args, "out", None) or "bandembed-out"
    if args.command == "suite":
        run = Run(out, cfg, ["suite", args.filter or "all"])
        code = cmd_suite(cfg, run, args.filter)
    else:
        run = Run(out, cfg, ["demo", args.name])
        code = DEMO_FUNCS[args.name](cfg, run)
    run.finish({0: "pass", 1: "fail", 2: "error"}[code])
    return code


if __name__ == "__main__":
    sys.exit(main())
