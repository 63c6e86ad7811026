import json
import subprocess
import sys

import numpy as np
import pytest

from pgn import cli
from pgn.batch import SampleBatch


def run(*args):
    return subprocess.run([sys.executable, "-m", "pgn.cli", *args], capture_output=True, text=True)


def test_match_stdout(capsys):
    assert cli.main(["match", "--a", "1", "--r", "1", "--order", "5"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["p"] == pytest.approx(4.0) and doc["s"] == pytest.approx(1 / 12)
    assert max(doc["residuals"].values()) < 1e-9


def test_match_symmetric_auto(capsys):
    assert cli.main(["match", "--a", "1", "--r", "0.5", "--symmetric"]) == 0
    assert json.loads(capsys.readouterr().out)["q"] == 10


def test_exit_codes(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    out = tmp_path / "o.json"
    r = run("match", "--spec", str(bad), "--r", "0.5", "--out", str(out))
    assert r.returncode == 3 and not out.exists()
    unknown = tmp_path / "u.json"
    unknown.write_text(json.dumps({"family": "nope"}))
    assert run("match", "--spec", str(unknown), "--r", "0.5").returncode == 3
    assert run("match", "--a", "1", "--r", "0.5", "--bogus").returncode == 2  # argparse usage error
    assert run("match", "--a", "1", "--r", "0.5", "--order", "7").returncode == 4
    assert run("mv-match", "--spec", str(_radial_spec(tmp_path)), "--tau", "0.6").returncode == 4


def test_match_infeasible_exit(tmp_path):
    spec = tmp_path / "s.json"
    spec.write_text(json.dumps({"family": "custom", "name": "power_law", "params": {"c": 1, "a": 1.0},
                                "upper_support": 1.0, "singularity_exponent_hint": 1.0}))
    assert run("match", "--spec", str(spec), "--r", "1", "--order", "4", "--p", "-1").returncode == 2


def _radial_spec(tmp_path):
    p = tmp_path / "radial.json"
    p.write_text(json.dumps({"nu": {"kind": "uniform", "d": 2, "mass": 1.0},
                             "a": {"name": "constant", "params": {"value": 1.0}},
                             "c": {"name": "constant", "params": {"value": 1.0}},
                             "r0": 1.0, "symmetric": True}))
    return p


def test_sample_reproducible(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(["sample", "--a", "1", "--r", "0.3", "--n", "2e4", "--seed", "9", "--out", str(a)]) == 0
    assert cli.main(["sample", "--a", "1", "--r", "0.3", "--n", "2e4", "--seed", "9", "--threads", "3",
                     "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    meta = json.loads((tmp_path / "a.csv.meta.json").read_text())
    assert meta["seed"] == 9 and "spec_hash" in meta
    c = tmp_path / "c.csv"
    assert cli.main(["sample", "--config", str(tmp_path / "a.csv.meta.json"), "--out", str(c)]) == 0
    assert c.read_bytes() == a.read_bytes()
    assert b"\r" not in a.read_bytes()


def test_sample_binary_and_params(tmp_path, capsys):
    params = tmp_path / "p.json"
    assert cli.main(["match", "--a", "1.2", "--r", "0.2", "--out", str(params)]) == 0
    out = tmp_path / "x.bin"
    assert cli.main(["sample", "--a", "1.2", "--r", "0.2", "--params", str(params), "--n", "1000",
                     "--format", "bin", "--out", str(out)]) == 0
    batch = SampleBatch.from_binary(out)
    assert batch.n == 1000 and np.all(np.isfinite(batch.values))


def test_mv_sample(tmp_path):
    out = tmp_path / "mv.csv"
    assert cli.main(["mv-sample", "--spec", str(_radial_spec(tmp_path)), "--tau", "0.3", "--n", "2000",
                     "--component", "T", "--out", str(out)]) == 0
    vals = np.loadtxt(out, delimiter=",")
    assert vals.shape == (2000, 2)


def test_bound_sweep(tmp_path):
    out = tmp_path / "b.csv"
    assert cli.main(["bound", "--a", "1", "--sweep", "r=0.5:0.001:log20", "--out", str(out)]) == 0
    lines = out.read_text().strip().split("\n")
    assert len(lines) == 21 and "Q5" in lines[0]


def test_mv_bound(tmp_path, capsys):
    assert cli.main(["mv-bound", "--spec", str(_radial_spec(tmp_path)), "--tau", "0.2"]) == 0
    out = capsys.readouterr().out
    assert "moment_factor" in out


def test_selftest(capsys):
    assert cli.main(["selftest"]) == 0
    assert json.loads(capsys.readouterr().out)["pass"] is True


def test_help_lists_flags():
    for sub in cli.COMMANDS:
        r = run(sub, "--help")
        assert r.returncode == 0 and "--seed" in r.stdout


def test_validate_quick(capsys):
    assert cli.main(["validate", "--suite", "quick"]) == 0
    assert json.loads(capsys.readouterr().out)["pass"] is True
