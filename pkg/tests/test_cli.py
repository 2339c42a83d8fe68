import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from percolab.cli import atomic_write, build_parser, run
from percolab.lattice import LatticeBox, deserialize, sample_configuration, serialize

ROOT = Path(__file__).parent.parent
DATA = Path(__file__).parent / "data"


def _help_text():
    ap = build_parser()
    out = ap.format_help()
    for name, sp in ap._subparsers._group_actions[0].choices.items():
        out += "\n==== " + name + "\n" + sp.format_help()
    return out


def test_help_matches_golden(monkeypatch):
    monkeypatch.setenv("COLUMNS", "100")
    assert _help_text() == (DATA / "cli_help.txt").read_text()


def test_sample_twice_identical(tmp_path, capsys):
    a, b = tmp_path / "a.perc", tmp_path / "b.perc"
    assert run(["sample", "--dim", "2", "--size", "32", "--p", "0.7", "--seed", "7", "--out", str(a)]) == 0
    assert run(["sample", "--dim", "2", "--size", "32", "--p", "0.7", "--seed", "7", "--out", str(b)]) == 0
    out = capsys.readouterr()
    d1, d2 = out.out.split()
    assert d1 == d2 and a.read_bytes() == b.read_bytes()
    assert "resolved plan:" in out.err
    config = deserialize(a.read_bytes())
    assert config.digest() == d1 and config.box == LatticeBox((32, 32), (-16, -16))


def test_dist_variants(tmp_path, capsys):
    path = tmp_path / "full.perc"
    run(["sample", "--dim", "2", "--size", "12", "--p", "1.0", "--seed", "1", "--out", str(path)])
    capsys.readouterr()
    assert run(["dist", "--config", str(path), "--from", "0,0", "--to", "3,4"]) == 0
    assert capsys.readouterr().out.strip() == "7"
    assert run(["dist", "--config", str(path), "--from", "0,0", "--to", "3,-4", "--star"]) == 0
    assert capsys.readouterr().out.strip() == "7"
    assert run(["dist", "--config", str(path), "--from=-6,0", "--to", "0,0", "--renorm", "4,17"]) == 0
    assert capsys.readouterr().out.strip() == "6"
    empty = tmp_path / "empty.perc"
    empty.write_bytes(serialize(sample_configuration(LatticeBox((4, 4)), 0.0, 0)))
    assert run(["dist", "--config", str(empty), "--from", "0,0", "--to", "1,0"]) == 0
    assert capsys.readouterr().out.strip() == "inf"


def test_exit_codes(tmp_path, capsys):
    assert run(["dist", "--config", str(tmp_path / "missing.perc"), "--from", "0,0", "--to", "1,1"]) == 2
    assert run(["sample", "--dim", "2", "--size", "8", "--p", "1.5", "--out", str(tmp_path / "x")]) == 2
    assert run(["sample", "--dim", "2", "--size", "8", "--p", "0.5", "--seed", "-1",
                "--out", str(tmp_path / "x")]) == 2
    assert run(["dist", "--config", str(tmp_path / "x"), "--from", "0,a", "--to", "1,1"]) == 2
    bad = tmp_path / "bad.perc"
    bad.write_bytes(b"PERCCFG9")
    assert run(["dist", "--config", str(bad), "--from", "0,0", "--to", "1,1"]) == 2
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps({"kind": "tail", "n": 8, "replicates": 100}))
    assert run(["experiment", "tail", "--plan", str(plan), "--out", str(tmp_path / "r.json")]) == 3
    plan.write_text(json.dumps({"kind": "variance", "ns": [8, 16], "replicates": 10}))
    assert run(["experiment", "variance", "--plan", str(plan), "--out", str(tmp_path / "r.json")]) == 3
    plan.write_text(json.dumps({"kind": "gap", "ns": [8, 16, 32, 64]}))
    assert run(["experiment", "variance", "--plan", str(plan), "--out", str(tmp_path / "r.json")]) == 2
    assert not (tmp_path / "r.json").exists()
    assert run(["nonsense"]) == 2


def test_env_seed(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("PERCOLAB_SEED", "7")
    run(["sample", "--dim", "2", "--size", "10", "--p", "0.5", "--out", str(tmp_path / "a.perc")])
    monkeypatch.delenv("PERCOLAB_SEED")
    run(["sample", "--dim", "2", "--size", "10", "--p", "0.5", "--seed", "7", "--out", str(tmp_path / "b.perc")])
    d1, d2 = capsys.readouterr().out.split()
    assert d1 == d2
    monkeypatch.setenv("PERCOLAB_SEED", "abc")
    assert run(["sample", "--dim", "2", "--size", "10", "--p", "0.5", "--out", str(tmp_path / "c.perc")]) == 2


def test_experiment_report_validates(tmp_path, capsys):
    out = tmp_path / "var.json"
    rc = run(["experiment", "variance", "--plan", str(ROOT / "demos" / "plans" / "var.json"),
              "--out", str(out), "--csv", str(tmp_path / "csv"), "--workers", "4"])
    assert rc == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines and lines[0].startswith("PASS") and "variance_exponent_below_2" in lines[0]
    doc = json.loads(out.read_text())
    jsonschema = pytest.importorskip("jsonschema")
    jsonschema.validate(doc, json.loads((ROOT / "schemas" / "report.schema.json").read_text()))
    assert (tmp_path / "csv" / "variance_cells.csv").is_file()
    assert run(["inspect", str(out)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["verdicts"] == {"variance_exponent_below_2": "pass"}


def test_mu_and_gap_roundtrip(tmp_path, capsys):
    norm, table = tmp_path / "norm.json", tmp_path / "h.json"
    rc = run(["mu", "--p", "1.0", "--direction", "1,0", "--direction", "1,1", "--ns", "4,8,12,16",
              "--replicates", "30", "--margin", "4", "--symmetrize", "--out", str(norm), "--htable", str(table)])
    assert rc == 0
    rows = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert [float(r["mu"]) for r in rows] == [1.0, 2.0]
    assert run(["gap", "--norm", str(norm), "--htable", str(table), "--M", "8", "--C", "0.1"]) == 0
    assert json.loads(capsys.readouterr().out)["passed"] is True
    assert run(["inspect", str(table)]) == 0
    assert json.loads(capsys.readouterr().out)["schema"] == "percolab.htable/1"


def test_atomic_write_leaves_no_partial_file(tmp_path):
    target = tmp_path / "x.txt"
    atomic_write(target, "one")
    atomic_write(target, b"two")
    assert target.read_text() == "two"
    assert sorted(p.name for p in tmp_path.iterdir()) == ["x.txt"]


def test_console_entry_point(tmp_path):
    env = {**os.environ, "PERCOLAB_SEED": "3"}
    res = subprocess.run([sys.executable, "-m", "percolab.cli", "sample", "--dim", "2", "--size", "6",
                          "--p", "0.5", "--out", str(tmp_path / "s.perc")], capture_output=True, text=True, env=env)
    assert res.returncode == 0
    assert res.stdout.strip() == sample_configuration(LatticeBox((6, 6), (-3, -3)), 0.5, 3).digest()
