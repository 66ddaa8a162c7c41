import os
from pathlib import Path

import numpy as np
import pytest
import yaml

from penbo.cli import main
from penbo.config import (config_from_mapping, dump_config, load_config, load_manifest,
                          write_manifest)
from penbo.errors import ConfigError
from penbo.harness import execute, report, resolve_out_dir, run_lock


BRL_RAW = {
    "schema_version": 1,
    "kind": "brl",
    "seed": 3,
    "out_dir": "brl_small",
    "plots": False,
    "env": {"name": "chain", "n_states": 2, "slip": 0.1, "gamma": 0.9},
    "policy": {"eps_floor": 0.02},
    "reward": {"beta": 0.0},
    "labeler": {"mode": "bernoulli"},
    "pair_horizon": 3,
    "penalty": {"sigma": 0.5, "eta": 0.2, "tau": 0.05, "tau_prime": 0.05,
                "K": 3, "T": 4, "n": 8, "B": 16, "H": 10, "warm_start": False},
}

STANDARD_RAW = {
    "schema_version": 1,
    "kind": "standard",
    "seed": 1,
    "out_dir": "quad_small",
    "plots": False,
    "instance": "quad",
    "noise": {"upper": 0.3, "lower": 0.3},
    "phi0": [2.0],
    "penalty": {"sigma": 0.3, "eta": 0.1, "tau": 0.05, "tau_prime": 0.05,
                "K": 5, "T": 6, "B": 8},
}

LEMMA_RAW = {
    "schema_version": 1,
    "kind": "lemma1",
    "seed": 0,
    "out_dir": "lemma_small",
    "plots": False,
    "lemma1": {"fn": "quad", "eta": 0.25, "steps": 30, "seeds": 5,
               "bias": 0.05, "noise": 0.05, "x0": 1.5, "smooth_l": 2.0,
               "pl_lo": -2.0, "pl_hi": 2.0, "pl_step": 1e-3},
}


def _write(tmp_path, raw, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(raw))
    return path


@pytest.fixture(autouse=True)
def _out_root(tmp_path, monkeypatch):
    monkeypatch.setenv("PENBO_OUT_ROOT", str(tmp_path / "runs"))
    return tmp_path


def test_config_round_trip(tmp_path):
    cfg = config_from_mapping(BRL_RAW)
    manifest = tmp_path / "manifest.yaml"
    write_manifest(cfg, manifest)
    again = load_manifest(manifest)
    assert again == cfg
    assert dump_config(again) == dump_config(cfg)


def test_unknown_key_rejected_with_line(tmp_path):
    raw = dict(BRL_RAW)
    raw["mystery"] = 1
    path = _write(tmp_path, raw)
    with pytest.raises(ConfigError, match="mystery"):
        load_config(path)
    text = path.read_text()
    line_no = next(i for i, l in enumerate(text.splitlines(), 1) if l.startswith("mystery"))
    with pytest.raises(ConfigError, match=f"line {line_no}"):
        load_config(path)


def test_nested_unknown_key_rejected(tmp_path):
    raw = {**BRL_RAW, "penalty": {**BRL_RAW["penalty"], "turbo": True}}
    with pytest.raises(ConfigError, match="penalty.turbo"):
        config_from_mapping(raw)


def test_schema_version_required():
    raw = dict(BRL_RAW)
    del raw["schema_version"]
    with pytest.raises(ConfigError, match="schema_version"):
        config_from_mapping(raw)


def test_bad_kind_rejected():
    with pytest.raises(ConfigError, match="kind"):
        config_from_mapping({**BRL_RAW, "kind": "mystery"})


def test_run_artifacts_and_determinism(tmp_path):
    cfg = config_from_mapping(BRL_RAW)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert execute(cfg, out_a) == 0
    assert execute(cfg, out_b) == 0
    assert (out_a / "record.csv").read_bytes() == (out_b / "record.csv").read_bytes()
    assert (out_a / "manifest.yaml").read_bytes() == (out_b / "manifest.yaml").read_bytes()


def test_pair_persistence_deterministic(tmp_path):
    raw = {**BRL_RAW, "persist_pairs": True,
           "penalty": {**BRL_RAW["penalty"], "T": 2, "K": 1}}
    cfg = config_from_mapping(raw)
    out_a, out_b = tmp_path / "pa", tmp_path / "pb"
    execute(cfg, out_a)
    execute(cfg, out_b)
    assert (out_a / "pairs.txt").read_bytes() == (out_b / "pairs.txt").read_bytes()
    from penbo.preference import load_pairs
    pairs = load_pairs(out_a / "pairs.txt")
    assert len(pairs) == 2 * cfg.penalty.B  # one batch per outer iteration


def test_report_contents_and_idempotence(tmp_path):
    raw = {**STANDARD_RAW, "penalty": {**STANDARD_RAW["penalty"], "eta": 0.0}}
    cfg = config_from_mapping(raw)
    out = tmp_path / "r"
    execute(cfg, out)
    text1 = report(out, plots=False)
    summary = (out / "summary.txt").read_bytes()
    text2 = report(out, plots=False)
    assert text1 == text2
    assert (out / "summary.txt").read_bytes() == summary
    assert "phi stationary" in text1
    assert "MATCH" in text1
    expected = cfg.penalty.B * cfg.penalty.K * cfg.penalty.T + cfg.penalty.B * cfg.penalty.T
    assert str(expected) in text1


def test_report_missing_dir_fails(tmp_path):
    with pytest.raises(FileNotFoundError):
        report(tmp_path / "nope", plots=False)


def test_lemma_csv_row_count(tmp_path):
    cfg = config_from_mapping(LEMMA_RAW)
    out = tmp_path / "lm"
    execute(cfg, out)
    lines = (out / "record.csv").read_text().splitlines()
    assert len(lines) == cfg.lemma1.steps + 2


def test_sweep_fans_out(tmp_path):
    raw = {
        "schema_version": 1,
        "kind": "sweep",
        "seed": 5,
        "out_dir": "sweep_b",
        "plots": False,
        "sweep": {"axis": "B", "values": [2, 4, 8]},
        "sweep_base": {k: v for k, v in STANDARD_RAW.items()
                       if k not in ("schema_version",)},
    }
    cfg = config_from_mapping(raw)
    out = tmp_path / "sw"
    assert execute(cfg, out) == 0
    for b in (2, 4, 8):
        child = out / f"B_{b}"
        assert (child / "record.csv").exists()
        assert (child / "manifest.yaml").exists()
        assert load_manifest(child / "manifest.yaml").penalty.B == b
    agg = (out / "aggregate.csv").read_text().splitlines()
    assert agg[0] == "value,final_d_norm,final_upper_loss,sample_total"
    assert len(agg) == 4


def test_lockfile_blocks_concurrent_runs(tmp_path):
    out = tmp_path / "locked"
    with run_lock(out):
        with pytest.raises(ConfigError, match="locked"):
            with run_lock(out):
                pass
    with run_lock(out):  # released cleanly
        pass


def test_no_writes_outside_out_dir(tmp_path, monkeypatch):
    cfg = config_from_mapping({**STANDARD_RAW, "plots": False})
    workdir = tmp_path / "cwd"
    workdir.mkdir()
    monkeypatch.chdir(workdir)
    out = tmp_path / "only_here"
    before = set(workdir.iterdir())
    execute(cfg, out)
    assert set(workdir.iterdir()) == before
    assert (out / "record.csv").exists()


def test_cli_run_and_report(tmp_path, capsys):
    path = _write(tmp_path, STANDARD_RAW)
    out = tmp_path / "cli_out"
    assert main(["run", "--config", str(path), "--out", str(out), "--no-plots"]) == 0
    assert (out / "record.csv").exists()
    assert main(["report", str(out), "--no-plots"]) == 0
    assert "sample total" in capsys.readouterr().out


def test_cli_seed_override(tmp_path):
    path = _write(tmp_path, STANDARD_RAW)
    out1, out2, out3 = tmp_path / "s1", tmp_path / "s2", tmp_path / "s3"
    main(["run", "--config", str(path), "--out", str(out1), "--no-plots"])
    main(["run", "--config", str(path), "--out", str(out2), "--no-plots", "--seed", "99"])
    main(["run", "--config", str(path), "--out", str(out3), "--no-plots", "--seed", "99"])
    assert (out2 / "record.csv").read_bytes() == (out3 / "record.csv").read_bytes()
    assert (out1 / "record.csv").read_bytes() != (out2 / "record.csv").read_bytes()


def test_cli_invalid_config_exit_2(tmp_path, capsys):
    path = _write(tmp_path, {**STANDARD_RAW, "mystery": 7})
    assert main(["run", "--config", str(path), "--no-plots"]) == 2
    assert "mystery" in capsys.readouterr().err


def test_cli_gradcheck_pass_and_negative_control(tmp_path, capsys):
    ok = _write(tmp_path, {
        "schema_version": 1, "kind": "gradcheck", "seed": 0, "out_dir": "gc",
        "plots": False,
        "gradcheck": {"names": ["synthetic_quad", "synthetic_sinsq"], "points": 5},
    }, "gc.yaml")
    assert main(["gradcheck", "--config", str(ok), "--out", str(tmp_path / "gc1")]) == 0
    out = capsys.readouterr().out
    assert "synthetic_quad" in out and "passed" in out

    bad = _write(tmp_path, {
        "schema_version": 1, "kind": "gradcheck", "seed": 0, "out_dir": "gc2",
        "plots": False,
        "gradcheck": {"names": ["synthetic_quad"], "points": 5,
                      "corrupt": "synthetic_quad"},
    }, "gc_bad.yaml")
    assert main(["gradcheck", "--config", str(bad), "--out", str(tmp_path / "gc3")]) == 1
    captured = capsys.readouterr()
    assert "synthetic_quad" in captured.err


def test_cli_gradcheck_tolerance_override(tmp_path, capsys):
    loose = _write(tmp_path, {
        "schema_version": 1, "kind": "gradcheck", "seed": 0, "out_dir": "gc4",
        "plots": False,
        "gradcheck": {"names": ["synthetic_quad"], "points": 3, "tolerance": 0.5,
                      "corrupt": "synthetic_quad"},
    }, "gc_loose.yaml")
    assert main(["gradcheck", "--config", str(loose), "--out", str(tmp_path / "gc5")]) == 0
    assert "0.5" in capsys.readouterr().out


def test_epsilon_schedule_through_config(tmp_path):
    raw = {**STANDARD_RAW, "epsilon": 0.5,
           "schedule": {"c_sigma": 0.09, "c_B": 1.0, "c_T": 1.0, "c_K": 1.0, "c_H": 1.0}}
    cfg = config_from_mapping(raw)
    out = tmp_path / "eps"
    execute(cfg, out)
    from penbo.harness import read_csv
    cols = read_csv(out / "record.csv")
    # schedule: B = ceil(1/0.25) = 4, T = 2, K = 1 -> total = 4*1*2 + 4*2
    assert int(cols["samples_cum"][-1]) == 4 * 1 * 2 + 4 * 2
