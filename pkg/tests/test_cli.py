import csv
import json

import pytest

from bandembed.cli import config_hash, load_config, main


def write_cfg(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_unknown_config_key_is_a_schema_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"seed": 1, "Npiars": 10})
    assert main(["--config", cfg, "--out", str(tmp_path / "o"), "demo", "sampling"]) == 2
    assert "Npiars" in capsys.readouterr().err


@pytest.mark.parametrize("bad", [{"seed": -1}, {"mode": "lax"}, {"system": "cat map"}, {"params": {"Q": 3}},
                                 {"delta": 0}])
def test_invalid_config_values(tmp_path, bad):
    assert main(["--config", write_cfg(tmp_path, bad), "--out", str(tmp_path / "o"), "demo", "sampling"]) == 2


def test_unreadable_config(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert main(["--config", str(p), "demo", "sampling"]) == 2


def test_usage_errors_exit_2(tmp_path):
    assert main(["demo", "nosuchdemo"]) == 2
    assert main(["suite", "--filter", "nosuchmodule"]) == 2
    assert main([]) == 2


def test_flags_before_and_after_subcommand(tmp_path):
    a = tmp_path / "a"
    assert main(["--seed", "5", "demo", "sampling", "--out", str(a)]) == 0
    m = json.loads((a / "manifest.json").read_text())
    assert m["seeds"]["master"] == 5 and m["config"]["seed"] == 5


def test_config_hash_is_order_independent():
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
    assert load_config(None, seed=3)["seed"] == 3


def test_suite_filter_runs_one_module(tmp_path, capsys):
    out = tmp_path / "s"
    assert main(["suite", "--filter", "lattice", "--out", str(out)]) == 0
    rep = json.loads((out / "suite.json").read_text())
    assert list(rep["suites"]) == ["lattice"] and rep["suites"]["lattice"]["passed"] > 0 and rep["ok"]
    m = json.loads((out / "manifest.json").read_text())
    assert m["status"] == "pass" and set(m["versions"]) >= {"bandembed", "numpy", "scipy", "python"}
    assert len(m["config_hash"]) == 64
    assert "lattice" in capsys.readouterr().out


def test_demo_sampling_error_falls_with_oversampling(tmp_path):
    out = tmp_path / "samp"
    assert main(["demo", "sampling", "--out", str(out)]) == 0
    rows = read_csv(out / "sampling.csv")
    assert rows[0] == ["oversampling", "step", "max_error", "tail_bound"]
    errs = [float(r[2]) for r in rows[1:]]
    tails = [float(r[3]) for r in rows[1:]]
    assert all(e <= t for e, t in zip(errs, tails))
    assert errs[-1] < 1e-9 < errs[0]


def test_demo_bezout_counts(tmp_path):
    out = tmp_path / "bz"
    assert main(["demo", "bezout", "--out", str(out)]) == 0
    rows = read_csv(out / "bezout.csv")
    assert rows[1:] == [["1", "2", "2", "2"], ["2", "4", "4", "6"]]


def test_demo_interp_within_bound(tmp_path):
    out = tmp_path / "ip"
    assert main(["demo", "interp", "--out", str(out)]) == 0
    rep = json.loads((out / "interp.json").read_text())
    assert rep["ok"] and rep["max_norm"] <= 0.5


def test_demo_tiling_geometry(tmp_path):
    out = tmp_path / "tl"
    assert main(["demo", "tiling", "--out", str(out)]) == 0
    rep = json.loads((out / "tiling.json").read_text())
    vols = sum(float(r[2]) for r in read_csv(out / "tiles.csv")[1:])
    assert rep["schema_version"] == 1 and vols == pytest.approx(2 * 300)


def test_demo_welfare_byte_identical(tmp_path):
    a, b = tmp_path / "w1", tmp_path / "w2"
    cfg = write_cfg(tmp_path, {"instances": 8, "window": 200})
    assert main(["--config", cfg, "--seed", "11", "demo", "welfare", "--out", str(a)]) == 0
    assert main(["--config", cfg, "--seed", "11", "demo", "welfare", "--out", str(b)]) == 0
    for name in ("welfare.json", "welfare.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    for m in (ma, mb):
        m.pop("timestamp")
        m.pop("wall_seconds")
    assert ma == mb


def test_demo_embed_without_pairs(tmp_path):
    out = tmp_path / "e0"
    cfg = write_cfg(tmp_path, {"Npairs": 0})
    assert main(["--config", cfg, "demo", "embed", "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["pairs"] == [] and rep["schema_version"] == 1
    assert rep["params"]["R0"] > 0 and len(rep["params"]["log"]) > 10
    assert read_csv(out / "pairs.csv") == [["i", "j", "x", "y", "d", "sup_diff", "case"]]


def test_demo_embed_strict_mode_fails_cleanly(tmp_path, capsys):
    out = tmp_path / "es"
    assert main(["--mode", "strict", "demo", "embed", "--out", str(out)]) == 1
    assert "c1 A" in capsys.readouterr().err
    assert json.loads((out / "manifest.json").read_text())["status"] == "fail"
