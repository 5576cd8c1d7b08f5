import csv
import json
from pathlib import Path

import pytest

from tewillmore import cli

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_potential_command(tmp_path, capsys):
    code, out, _ = run(capsys, "potential", CONFIGS / "moebius_2_1_half.toml", "--out", tmp_path)
    assert code == 0
    pot = json.loads((tmp_path / "potential.json").read_text())
    rep = json.loads((tmp_path / "potential_report.json").read_text())
    assert pot["n"] == 1 and pot["sha256"] == rep["sha256"]
    assert rep["sha256"][:16] in out


def test_bad_spec_exits_2(tmp_path, capsys):
    code, _, err = run(capsys, "potential", CONFIGS / "bad_b.toml", "--out", tmp_path)
    assert code == 2 and "potential.b[1]" in err
    code, _, err = run(capsys, "analyze", tmp_path / "missing.toml", "--out", tmp_path)
    assert code == 2
    with pytest.raises(SystemExit) as ei:
        cli.main(["sweep", "nope"])
    assert ei.value.code == 2
    capsys.readouterr()


def test_analyze_cylinder(tmp_path, capsys):
    code, out, _ = run(capsys, "analyze", CONFIGS / "cylinder_2_1.toml", "--out", tmp_path)
    assert code == 0
    res = json.loads((tmp_path / "analyze.json").read_text())
    assert "minimal period: 7.02481" in out
    assert res["closing"]["minimal_period"] == pytest.approx(7.024814731040727, rel=1e-12)


def test_synth_outputs_and_determinism(tmp_path, capsys):
    args = ["synth", CONFIGS / "moebius_2_1_half.toml", "--nu", "16", "--nv", "5", "--vrange=-0.5,0.5"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(capsys, *args, "--out", a)[0] == 0
    assert run(capsys, *args, "--out", b)[0] == 0
    for name in ("mesh.obj", "mesh.csv", "synth.json", "mesh.png", "residuals.png"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    summary = json.loads((a / "synth.json").read_text())
    assert summary["vrange"] == [-0.5, 0.5]
    with open(a / "mesh.csv") as fh:
        assert sum(1 for _ in csv.reader(fh)) == 1 + 16 * 5


def test_synth_outside_strip_exits_3(tmp_path, capsys):
    code, _, err = run(capsys, "synth", CONFIGS / "moebius_2_1_half.toml", "--nu", "8", "--nv", "3",
                       "--strip=-0.5,0.5", "--vrange=-1,1", "--out", tmp_path)
    assert code == 3 and "strip" in err


def test_verify_lawson_and_tolerance(tmp_path, capsys):
    code, out, _ = run(capsys, "verify", "lawson", "--no-synth", "--out", tmp_path)
    assert code == 0 and out.strip().endswith("PASS")
    assert json.loads((tmp_path / "verify_lawson.json").read_text())
    # an explicit --tol tightens every threshold; 1e-20 is below what double precision can certify
    code, out, _ = run(capsys, "verify", "lawson", "--no-synth", "--tol", "1e-20", "--out", tmp_path)
    assert code == 1 and out.strip().endswith("FAIL")


def test_verify_ejiri_prints_the_note(tmp_path, capsys):
    code, out, _ = run(capsys, "verify", "ejiri", "--out", tmp_path)
    assert code == 0
    assert "s3 display discrepancy" in out and "17*sqrt2/48" in out


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_sweep_moebius(tmp_path, capsys):
    code, _, _ = run(capsys, "sweep", "moebius", "--mmax", "4", "--lmax", "4", "--beta-star", "0,1",
                     "--out", tmp_path)
    assert code == 0
    rows = _rows(tmp_path / "sweep.csv")
    assert len(rows) == 2 * 11
    for r in rows:
        m, l = int(r["m"]), int(r["l"])
        assert r["passed"] == str(int(m % 2 == 0 and l % 2 == 1))


def test_sweep_c_finds_cylinder_periods(tmp_path, capsys):
    code, _, _ = run(capsys, "sweep", "c", "--grid=-1,1,11", "--out", tmp_path)
    assert code == 0
    rows = _rows(tmp_path / "sweep.csv")
    closed = sorted(round(float(r["c"]), 12) for r in rows if r["minimal_period"])
    assert closed == [-0.8, -0.6, 0.0, 0.6, 0.8]
    assert all(float(r["closed_form_error"]) < 1e-9 for r in rows if abs(abs(float(r["c"])) - 1) > 1e-12)
    assert (tmp_path / "sweep.png").exists()


def test_sweep_lambda_needs_a_spec(tmp_path, capsys):
    code, _, _ = run(capsys, "sweep", "lambda", CONFIGS / "s4_moebius.toml", "--grid", "0,1,3", "--out", tmp_path)
    assert code == 0
    assert len(_rows(tmp_path / "sweep.csv")) == 3
    code, _, _ = run(capsys, "sweep", "theta", "--grid", "0,1", "--out", tmp_path)
    assert code == 2
