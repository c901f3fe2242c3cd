import csv
import json
import subprocess
import sys

import pytest

from manoma.cli import build_id, main, run_sweep, convergence_run
from manoma.config import SweepSpec, config_from_dict


def read(path):
    return list(csv.DictReader(open(path)))


def test_single_row(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["run", "--profile", "desk", "--scheme", "FPA-NOMA", "--seed", "3",
                 "--out", str(out)]) == 0
    rows = read(out)
    assert len(rows) == 1 and rows[0]["status"] == "ok" and rows[0]["scheme"] == "FPA-NOMA"
    assert rows[0]["build_id"] == build_id() and rows[0]["seed"] == "3"


def test_rows_reproducible_and_thread_independent(tmp_path):
    cfg = config_from_dict({"i_max": 1, "n_hippos": 2}, "desk")
    spec = SweepSpec("users", (2, 3), 2, ("FPA-NOMA", "FPA-SDMA", "MA-SDMA"))
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    rows = run_sweep(cfg, spec, 5, a, jsonl=tmp_path / "a.jsonl")
    run_sweep(cfg, spec, 5, b)
    run_sweep(cfg, spec, 5, c, threads=2)
    assert len(rows) == 12
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()
    lines = (tmp_path / "a.jsonl").read_text().splitlines()
    assert len(lines) == 12 and json.loads(lines[0])["scheme"] == "FPA-NOMA"


def test_single_row_rerun_matches_sweep(tmp_path):
    cfg = config_from_dict(None, "desk")
    spec = SweepSpec("users", (2,), 3, ("FPA-NOMA",))
    rows = run_sweep(cfg, spec, 9, tmp_path / "s.csv")
    out = tmp_path / "one.csv"
    main(["run", "--profile", "desk", "--scheme", "FPA-NOMA", "--seed", "9", "--axis", "users",
          "--values", "2", "--first-trial", "2", "--out", str(out)])
    assert read(out)[0] == read(tmp_path / "s.csv")[2]


def test_fri_axis_rows(tmp_path):
    out = tmp_path / "f.csv"
    assert main(["fri", "--profile", "desk", "--scheme", "MCP-NOMA", "--values", "0,0.2",
                 "--fri-trials", "5", "--out", str(out)]) == 0
    rows = read(out)
    assert [r["value"] for r in rows] == ["0.0", "0.2"]
    assert len(rows[0]["per_user_rates"].split(";")) == 5


def test_convergence_rows(tmp_path):
    cfg = config_from_dict({"i_max": 2, "n_hippos": 2, "n_users": 2}, "desk")
    out = tmp_path / "c.csv"
    improved, original = convergence_run(cfg, 0, out)
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["iteration", "improved", "original"] and len(rows) == 1 + cfg.i_max
    vals = [float(r[1]) for r in rows[1:]]
    assert vals == sorted(vals)


def test_errors_become_status(tmp_path):
    cfg = config_from_dict(None, "desk")
    rows = run_sweep(cfg, SweepSpec("users", (0,), 1, ("FPA-NOMA",)), 0, tmp_path / "e.csv")
    assert rows[0]["status"] == "error" and rows[0]["error"]


def test_config_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("alpha: 2\n")
    assert main(["run", "--config", str(cfg), "--scheme", "FPA-NOMA"]) == 2
    assert "alpha" in capsys.readouterr().err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "manoma", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "convergence" in res.stdout
