"""Command line interface: exit codes, file outputs, determinism.

Everything runs in-process through ``main(argv)`` against temporary
directories; no subprocesses and no reliance on the working directory.
"""

import json
import os

import numpy as np
import pytest

from jdfilter.cli import (EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_PASS, EXIT_USAGE,
                          load_run, main)

from test_model import BASE_CONFIG, _config


def _write_json(path, data):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh)
    return str(path)


def _read_bytes(*parts):
    with open(os.path.join(*map(str, parts)), "rb") as fh:
        return fh.read()


def _simulate(tmp_path, name="sim", scenario="constants", steps="50", seed="3",
              extra=()):
    out = str(tmp_path / name)
    rc = main(["simulate", "--scenario", scenario, "--steps", steps,
               "--seed", seed, "--output", out, *extra])
    assert rc == EXIT_PASS
    return out


# ---------------------------------------------------------------------------
# usage errors


def test_usage_exit_codes(tmp_path):
    assert main([]) == EXIT_USAGE
    assert main(["bogus"]) == EXIT_USAGE
    assert main(["simulate", "--scenario", "nope",
                 "--output", str(tmp_path / "x")]) == EXIT_USAGE
    assert main(["report", str(tmp_path / "missing")]) == EXIT_USAGE
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["report", str(empty)]) == EXIT_USAGE
    assert main(["filter-zakai", "--scenario", "constants",
                 "--path", str(tmp_path / "nowhere")]) == EXIT_USAGE


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    out = capsys.readouterr().out
    for sub in ("simulate", "filter-zakai", "reweight", "verify", "report"):
        assert sub in out


def test_schema_rejects_bad_configs(tmp_path):
    bad_key = _write_json(tmp_path / "a.json", {"scenario": "constants", "bogus": 1})
    assert main(["simulate", "--config", bad_key,
                 "--output", str(tmp_path / "o1")]) == EXIT_USAGE

    both = _write_json(tmp_path / "b.json",
                       {"scenario": "constants", "model": dict(BASE_CONFIG)})
    assert main(["simulate", "--config", both,
                 "--output", str(tmp_path / "o2")]) == EXIT_USAGE

    neither = _write_json(tmp_path / "c.json", {"seed": 1})
    assert main(["simulate", "--config", neither,
                 "--output", str(tmp_path / "o3")]) == EXIT_USAGE

    assert main(["simulate", "--config", str(tmp_path / "gone.json"),
                 "--output", str(tmp_path / "o4")]) == EXIT_USAGE


def test_simulate_gates_on_model_validation(tmp_path, capsys):
    cfg = {"model": _config(
        thinning={"family": "constant", "params": {"value": [1.0]}})}
    path = _write_json(tmp_path / "bad_model.json", cfg)
    rc = main(["simulate", "--config", path, "--output", str(tmp_path / "out")])
    assert rc == EXIT_FAIL
    assert "thinning_range" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# simulate


def test_simulate_outputs_and_rerun_identical(tmp_path):
    a = _simulate(tmp_path, "a")
    b = _simulate(tmp_path, "b")
    assert _read_bytes(a, "path.csv") == _read_bytes(b, "path.csv")

    meta_a = json.loads(_read_bytes(a, "path.meta.json"))
    meta_b = json.loads(_read_bytes(b, "path.meta.json"))
    assert meta_a == meta_b
    assert len(meta_a["config_hash"]) == 64

    other = _simulate(tmp_path, "c", seed="4")
    meta_c = json.loads(_read_bytes(other, "path.meta.json"))
    assert meta_c["config_hash"] != meta_a["config_hash"]


def test_flags_override_config_file(tmp_path):
    cfg = _write_json(tmp_path / "cfg.json",
                      {"scenario": "constants", "grid": {"steps": 40}})
    from jdfilter import load_path
    out1 = str(tmp_path / "from_config")
    assert main(["simulate", "--config", cfg, "--output", out1]) == EXIT_PASS
    assert load_path(out1).grid.steps == 40

    out2 = str(tmp_path / "from_flag")
    assert main(["simulate", "--config", cfg, "--steps", "20",
                 "--output", out2]) == EXIT_PASS
    assert load_path(out2).grid.steps == 20


def test_default_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("JDFILTER_OUTPUT_ROOT", str(tmp_path / "root"))
    rc = main(["simulate", "--scenario", "constants", "--steps", "30",
               "--seed", "1"])
    assert rc == EXIT_PASS
    assert (tmp_path / "root" / "simulate-constants-s1" / "path.csv").exists()


# ---------------------------------------------------------------------------
# filters and reweighting


def test_filter_pipeline(tmp_path):
    sim = _simulate(tmp_path)

    zdir = str(tmp_path / "zakai")
    rc = main(["filter-zakai", "--scenario", "constants", "--path", sim,
               "--particles", "200", "--seed", "7", "--store", "0,25,50",
               "--output", zdir])
    assert rc == EXIT_PASS
    zrun = load_run(zdir)
    assert zrun.kind == "zakai" and zrun.particle_count == 200
    np.testing.assert_array_equal(zrun.node_indices, [0, 25, 50])
    assert zrun.mass[0] == 1.0
    assert os.path.exists(os.path.join(zdir, "states", "node_000025.csv"))

    kdir = str(tmp_path / "ks")
    rc = main(["filter-ks", "--scenario", "constants", "--path", sim,
               "--particles", "200", "--seed", "7", "--output", kdir])
    assert rc == EXIT_PASS
    krun = load_run(kdir)
    assert krun.kind == "ks"
    np.testing.assert_array_equal(krun.mass, 1.0)
    assert "innovations" in krun.aggregates

    rdir = str(tmp_path / "rw")
    rc = main(["reweight", "--scenario", "constants", "--run", kdir,
               "--path", sim, "--seed", "7", "--output", rdir])
    assert rc == EXIT_PASS
    rrun = load_run(rdir)
    assert rrun.kind == "reweighted"
    chi = np.exp(np.sum(rrun.aggregates["log_chi_increments"]))
    assert rrun.mass[-1] == pytest.approx(chi, rel=1e-12)

    # reweighting an unnormalised run is a usage error
    assert main(["reweight", "--scenario", "constants", "--run", zdir,
                 "--path", sim, "--output", str(tmp_path / "rw2")]) == EXIT_USAGE


def test_filter_rerun_is_byte_identical(tmp_path):
    sim = _simulate(tmp_path)
    dirs = []
    for name in ("f1", "f2"):
        out = str(tmp_path / name)
        assert main(["filter-zakai", "--scenario", "constants", "--path", sim,
                     "--particles", "100", "--seed", "5", "--output", out]) == EXIT_PASS
        dirs.append(out)
    for fname in ("run.csv", "run.meta.json"):
        assert _read_bytes(dirs[0], fname) == _read_bytes(dirs[1], fname)
    states = sorted(os.listdir(os.path.join(dirs[0], "states")))
    assert states
    for s in states:
        assert _read_bytes(dirs[0], "states", s) == _read_bytes(dirs[1], "states", s)


def test_store_flag_validation(tmp_path):
    sim = _simulate(tmp_path)
    rc = main(["filter-zakai", "--scenario", "constants", "--path", sim,
               "--store", "abc", "--output", str(tmp_path / "f")])
    assert rc == EXIT_USAGE


def test_load_run_round_trip(tmp_path):
    sim = _simulate(tmp_path)
    out = str(tmp_path / "f")
    assert main(["filter-ks", "--scenario", "constants", "--path", sim,
                 "--particles", "64", "--seed", "2", "--output", out]) == EXIT_PASS
    a = load_run(out)
    b = load_run(out)
    np.testing.assert_array_equal(a.mass, b.mass)
    np.testing.assert_array_equal(a.mean, b.mean)
    for sa, sb in zip(a.states, b.states):
        np.testing.assert_array_equal(sa.points, sb.points)
        np.testing.assert_array_equal(sa.weights, sb.weights)
    inn_a = a.aggregates["innovations"]
    inn_b = b.aggregates["innovations"]
    np.testing.assert_array_equal(inn_a.dw_innov, inn_b.dw_innov)


# ---------------------------------------------------------------------------
# verify and report


VERIFY_ARGS = ["verify", "duality", "--scenario", "constants",
               "--times", "0.25", "--dual-samples", "2000",
               "--outer-runs", "200", "--particles", "64", "--steps", "50",
               "--seed", "0"]


def test_verify_duality_cli(tmp_path, capsys):
    out = str(tmp_path / "vd")
    rc = main(VERIFY_ARGS + ["--output", out])
    assert rc == EXIT_PASS
    assert "duality: PASS" in capsys.readouterr().out
    with open(os.path.join(out, "report-duality.json"), encoding="utf-8") as fh:
        rep = json.load(fh)
    assert rep["verdict"] == "pass"
    assert len(rep["details"]["config_hash"]) == 64
    assert rep["details"]["scenario"] == "constants"


def test_verify_rerun_identical_modulo_runtime(tmp_path):
    reports = []
    for name in ("v1", "v2"):
        out = str(tmp_path / name)
        assert main(VERIFY_ARGS + ["--output", out]) == EXIT_PASS
        with open(os.path.join(out, "report-duality.json"), encoding="utf-8") as fh:
            rep = json.load(fh)
        rep["runtime_s"] = 0.0  # the single volatile field
        reports.append(rep)
    assert reports[0] == reports[1]


def test_report_aggregates_tree(tmp_path, capsys):
    root = tmp_path / "tree"
    root.mkdir()
    sim = _simulate(root, "sim")
    assert main(["filter-zakai", "--scenario", "constants", "--path", sim,
                 "--particles", "64", "--seed", "2",
                 "--output", str(root / "filt")]) == EXIT_PASS
    assert main(VERIFY_ARGS + ["--output", str(root / "ver")]) == EXIT_PASS

    capsys.readouterr()
    assert main(["report", str(root)]) == EXIT_PASS
    out = capsys.readouterr().out
    assert "## Verification" in out and "## Filter runs" in out
    assert (root / "summary.md").exists() and (root / "summary.csv").exists()


def _fake_report(verdict):
    return {"name": "fake", "verdict": verdict, "seed": 0, "runtime_s": 0.0,
            "details": {},
            "rows": [{"name": "r", "estimate": 1.0, "se": None, "target": 0.0,
                      "discrepancy": 1.0, "tolerance": 0.5, "verdict": verdict}]}


def test_report_exit_code_tracks_worst_verdict(tmp_path):
    root = tmp_path / "mixed"
    root.mkdir()
    _write_json(root / "report-a.json", _fake_report("inconclusive"))
    assert main(["report", str(root)]) == EXIT_INCONCLUSIVE
    _write_json(root / "report-b.json", _fake_report("fail"))
    assert main(["report", str(root)]) == EXIT_FAIL
