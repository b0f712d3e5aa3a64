import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from reflected_stable import io
from reflected_stable.cli import main
from reflected_stable.config import ConfigError, parse_config

SMALL = ["--grid-n", "40", "--time-steps", "16", "--depth", "20"]


def test_minimal_config_parses(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"alpha": 1, "domain": [-1, 1], "grid_n": 200,
                                "reflection": {"tag": "dirac", "y0": 0}}))
    cfg = parse_config(str(path))
    assert cfg.grid_n == 200 and cfg.reflection == {"tag": "dirac", "y0": 0}


@pytest.mark.parametrize("bad", [
    {"alpha": 2}, {"alpha": 0}, {"reflection": {"tag": "dirac", "y0": 1.5}}, {"paths": 0},
    {"grid_n": 3}, {"domain": [1, -1]}, {"unknown": 1}, {"h": 0.5}, {"lambdas": [-1.0]},
    {"reflection": {"tag": "interior_jump", "alpha": 1}}])
def test_bad_configs_rejected(bad):
    with pytest.raises(ConfigError):
        parse_config(overrides=bad)


def test_flags_override_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"alpha": 0.5, "grid_n": 80}))
    cfg = parse_config(str(path), {"grid_n": 60, "alpha": None})
    assert (cfg.alpha, cfg.grid_n) == (0.5, 60)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(str(tmp_path / "nope.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{alpha: 1")
    with pytest.raises(ConfigError):
        parse_config(str(bad))


def test_kernel_round_trip(tmp_path, rng):
    K = rng.random((7, 7))
    io.write_kernel_csv(tmp_path / "k.csv", 0.25, K)
    io.write_kernel_binary(tmp_path / "k.rsk", 0.25, K)
    t, back = io.read_kernel_csv(tmp_path / "k.csv")
    assert t == 0.25 and np.array_equal(back, K)
    t, back = io.read_kernel_binary(tmp_path / "k.rsk")
    assert t == 0.25 and np.array_equal(back, K)
    raw = (tmp_path / "k.rsk").read_bytes()
    assert raw[:4] == b"RSK1" and len(raw) == 4 + 16 + 8 * 49


def test_kernel_command(tmp_path, capsys):
    assert main(["kernel", *SMALL, "--t", "1", "--out", str(tmp_path)]) == 0
    t, K = io.read_kernel_csv(tmp_path / "kernel_t1.csv")
    report = json.loads((tmp_path / "kernel_report.json").read_text())[0]
    assert K.shape == (40, 40)
    assert np.max(np.abs(K.sum(axis=1) - 1)) <= report["truncation_bound"] + 1e-8
    with open(tmp_path / "kernel_t1.csv") as fh:
        header = next(csv.reader(fh))
    assert header[:4] == ["t", "n", "row", "c0"]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config_hash"] == io.config_hash(parse_config(overrides={
        "grid_n": 40, "time_steps": 16, "depth": 20, "t": [1.0], "out": str(tmp_path)}).as_dict())
    assert {a["path"] for a in manifest["artifacts"]} == {"kernel_t1.csv", "kernel_report.json"}


def test_exit_codes(tmp_path, capsys):
    assert main(["simulate", "--paths", "0", "--out", str(tmp_path)]) == 2
    assert main(["kernel", "--alpha", "2"]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["kernel", "--reflection", "{not json"]) == 2


def test_module_error_exits_one(tmp_path, capsys, monkeypatch):
    from reflected_stable import semigroup
    from reflected_stable.errors import SeriesError

    def broken(*args, **kw):
        raise SeriesError("row-sum defect too large")

    monkeypatch.setattr(semigroup, "duhamel_series", broken)
    assert main(["kernel", *SMALL, "--out", str(tmp_path)]) == 1
    assert "SeriesError: row-sum defect too large" in capsys.readouterr().err


def test_failed_checks_exit_three(tmp_path, capsys):
    # a fine grid with a coarse time ladder cannot halve the series error
    rc = main(["validate", "--grid-n", "40", "--time-steps", "16", "--only", "series_vs_exp",
               "--out", str(tmp_path)])
    assert rc == 3
    report = json.loads((tmp_path / "run_report.json").read_text())
    assert report[0]["check"] == "series_vs_exp" and report[0]["status"] == "fail"
    assert set(report[0]) == {"check", "status", "value", "tolerance", "note"}


def test_other_commands(tmp_path, capsys):
    for cmd in ("resolvent", "stationary"):
        assert main([cmd, *SMALL, "--out", str(tmp_path / cmd)]) == 0
    pi = np.loadtxt(tmp_path / "stationary" / "pi.csv", delimiter=",", skiprows=1)
    assert pi[:, 1].sum() == pytest.approx(1.0, abs=1e-12)
    bvp = np.loadtxt(tmp_path / "resolvent" / "bvp_lambda1.csv", delimiter=",", skiprows=1)
    assert np.max(np.abs(bvp[:, 3])) < 1e-10


def test_simulate_is_deterministic(tmp_path, capsys):
    args = ["simulate", *SMALL, "--paths", "300", "--h", "1e-3", "--seed", "3"]
    for name in ("a", "b"):
        assert main([*args, "--out", str(tmp_path / name)]) == 0
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())["artifacts"]
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())["artifacts"]
    assert ma == mb


def test_module_entry_point_with_thread_cap(tmp_path):
    env = dict(os.environ, RS_THREADS="1")
    out = subprocess.run([sys.executable, "-m", "reflected_stable", "validate", "--grid-n", "40",
                          "--only", "sampler_suite", "--out", str(tmp_path)],
                         env=env, capture_output=True, text=True, timeout=300)
    assert out.returncode == 0, out.stderr
    assert "PASS sampler_suite" in out.stdout
