import csv
import json
import shutil
import subprocess

import pytest

from carre_lab.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_analyze_loop(capsys):
    code, out, _ = run(capsys, "analyze", "--builtin", "loop", "1", "1", "1")
    d = json.loads(out)
    assert code == 0 and d["schema_version"] == 1
    assert d["classification"] == "Normal"
    assert d["spectral_gap"] == pytest.approx(1.5)
    assert d["poincare"] == pytest.approx(3.0)
    assert d["poincare_order_specific"] is False


def test_analyze_spec_file(capsys, tmp_path):
    p = tmp_path / "g.json"
    p.write_text(json.dumps({"kind": "loop", "params": {"a": 4, "b": 1, "c": 1}}))
    code, out, _ = run(capsys, "analyze", "--spec", str(p), "--gauge", "raw", "--out",
                       str(tmp_path / "o"))
    d = json.loads(out)
    assert code == 0 and d["classification"] == "NonNormal" and d["poincare_order_specific"]
    assert d["stationary_measure"] == [0.25, 1.0, 1.0]
    assert json.loads((tmp_path / "o" / "analysis.json").read_text()) == d


def test_evolve_outputs(capsys, tmp_path):
    code, out, _ = run(capsys, "evolve", "--builtin", "loop", "1", "1", "1", "--g0", "basis:0",
                       "--grid", "geo:0.01:20:60", "--order", "4", "--out", str(tmp_path))
    assert code == 0
    summary = json.loads(out)
    assert summary["rows"] == 60 and summary["fitted_rate"] == pytest.approx(3.0, rel=1e-6)
    rows = list(csv.reader((tmp_path / "energies.csv").open()))
    assert rows[0] == ["t", "e0", "e1", "e2", "e3", "e4"] and len(rows) == 61
    assert float(rows[1][2]) == pytest.approx(2 / 3, rel=1e-15)
    traj = list(csv.reader((tmp_path / "trajectory.csv").open()))
    assert traj[0] == ["t", "state_0", "state_1", "state_2"] and len(traj) == 61
    assert (tmp_path / "energies.png").stat().st_size > 0
    assert (tmp_path / "summary.json").exists()


def test_evolve_no_plots(capsys, tmp_path):
    code, _, _ = run(capsys, "evolve", "--builtin", "cycle", "4", "1", "--no-plots",
                     "--out", str(tmp_path))
    assert code == 0 and not (tmp_path / "energies.png").exists()


def test_order_above_limit(capsys, tmp_path):
    code, _, err = run(capsys, "evolve", "--builtin", "loop", "1", "1", "1", "--order", "20",
                       "--out", str(tmp_path))
    assert code == 2 and "--order" in err


def test_verify_normal(capsys, tmp_path):
    code, out, _ = run(capsys, "verify", "--builtin", "loop", "1", "1", "1", "--no-plots",
                       "--out", str(tmp_path))
    d = json.loads(out)
    assert code == 0 and d["exit_code"] == 0
    assert all(c["pass"] for c in d["checks"])
    assert json.loads((tmp_path / "report.json").read_text())["schema_version"] == 1


@pytest.mark.parametrize("alpha,exact", [("0.5", []), ("1/2", ["--exact"])])
def test_verify_counterexample_witness(capsys, alpha, exact):
    code, out, _ = run(capsys, "verify", "--builtin", "loop", "4", "1", "1", "--gauge", "raw",
                       "--g0", f"alpha:{alpha}", "--order", "2", "--no-plots", *exact)
    d = json.loads(out)
    lc = next(c for c in d["checks"] if c["check"] == "log_convex_in_n")
    assert lc["status"] == "witness"
    assert lc["details"]["gaps"][0] == pytest.approx(-2 / 3, rel=1e-12)
    assert code == 0


def test_verify_counterexample_default_order_fails_positivity(capsys):
    code, out, _ = run(capsys, "verify", "--builtin", "loop", "4", "1", "1", "--gauge", "raw",
                       "--g0", "alpha:0.5", "--no-plots")
    d = json.loads(out)
    failing = {c["check"] for c in d["checks"] if not c["pass"]}
    assert "gamma_positivity" in failing
    assert code == 1


def test_require_normal(capsys):
    code, _, _ = run(capsys, "verify", "--builtin", "loop", "4", "1", "1", "--gauge", "raw",
                     "--g0", "alpha:0.5", "--order", "2", "--no-plots", "--require-normal")
    assert code == 1


def test_example_loop_counter(capsys):
    code, out, _ = run(capsys, "example", "loop-counter")
    d = json.loads(out)
    assert code == 0
    assert all(r["raw_match"] and r["normalized_match"] for r in d["table"])
    half = next(r for r in d["table"] if r["alpha"] == "1/2")
    assert half["raw_gap"] == "-2/3" and half["normalized_gap"] == "-32/243"


def test_example_loop_normal(capsys):
    code, out, _ = run(capsys, "example", "loop-normal")
    assert code == 0 and json.loads(out)["classification"] == "Normal"


def test_sweep_random(capsys, tmp_path):
    code, _, _ = run(capsys, "sweep", "--seeds", "0:6", "--dims", "3,4", "--jobs", "3",
                     "--out", str(tmp_path))
    rows = list(csv.DictReader((tmp_path / "sweep.csv").open()))
    assert code == 0 and len(rows) == 12
    assert [int(r["seed"]) for r in rows[:6]] == list(range(6))


def test_sweep_loop_parameters(capsys):
    code, out, _ = run(capsys, "sweep", "--loop-a", "1,1.5,2,4")
    rows = list(csv.DictReader(out.splitlines()))
    assert code == 0
    assert [r["classification"] for r in rows] == ["Normal", "NonNormal", "NonNormal", "NonNormal"]
    assert float(rows[0]["polynomial_margin"]) >= 0


def test_sweep_empty_range(capsys):
    code, _, err = run(capsys, "sweep", "--seeds", "3:3")
    assert code == 2 and "empty" in err


def test_malformed_spec(capsys, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"kind": "loop",\n')
    code, _, err = run(capsys, "analyze", "--spec", str(p))
    assert code == 2 and "line 2" in err


def test_missing_generator(capsys):
    code, _, err = run(capsys, "analyze")
    assert code == 2 and "--spec" in err


def test_tolerance_env(capsys, monkeypatch):
    monkeypatch.setenv("CARRE_LAB_TOL", "1e-3")
    code, out, _ = run(capsys, "analyze", "--builtin", "loop", "1", "1", "1")
    assert code == 0 and json.loads(out)["tolerance"] == 1e-3
    monkeypatch.setenv("CARRE_LAB_TOL", "abc")
    assert run(capsys, "analyze", "--builtin", "loop", "1", "1", "1")[0] == 2


@pytest.mark.parametrize("g0", ["basis:7", "1,2", "alpha:x"])
def test_bad_observable(capsys, g0):
    assert run(capsys, "analyze", "--builtin", "loop", "1", "1", "1", "--g0", g0)[0] == 2


@pytest.mark.skipif(shutil.which("carre-lab") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["carre-lab", "analyze", "--builtin", "cycle", "4", "1"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["classification"] == "DetailedBalance"
