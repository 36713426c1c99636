import json
import subprocess
from pathlib import Path

import pytest

from finitegap_toda.cli import main

DATA = Path(__file__).resolve().parent.parent / "data"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_duplicate_branch_points_exit_2(capsys):
    code, _, err = run(capsys, "curve", "--curve", DATA / "bad_duplicate.json")
    assert code == 2
    assert "validation error" in err and any(ch.isdigit() for ch in err)


def test_missing_file_exit_2(capsys):
    code, _, err = run(capsys, "periods", "--curve", DATA / "nope.json")
    assert code == 2 and "cannot read" in err


def test_bad_tolerance_exit_2(capsys):
    code, _, _ = run(capsys, "curve", "--curve", DATA / "g0.json", "--tol-quad", "0")
    assert code == 2


def test_curve_to_stdout(capsys):
    code, out, _ = run(capsys, "curve", "--curve", DATA / "g1_complex.json")
    assert code == 0
    doc = json.loads(out)
    assert doc["genus"] == 1 and len(doc["branch_points"]) == 4


@pytest.mark.parametrize("name", ["g0", "g1_selfadjoint"])
def test_verify_passes(capsys, tmp_path, name):
    code, _, err = run(capsys, "verify", "--curve", DATA / f"{name}.json", "--out", tmp_path)
    assert code == 0, err
    doc = json.loads((tmp_path / "verify.json").read_text())
    assert doc["passed"] and all(c["passed"] for c in doc["checks"])


def test_spectrum_trace_self_adjoint(capsys, tmp_path):
    code, _, err = run(capsys, "spectrum", "trace", "--curve", DATA / "g1_selfadjoint.json",
                       "--out", tmp_path)
    assert code == 0, err
    doc = json.loads((tmp_path / "spectrum.json").read_text())
    assert len(doc["arcs"]) == 2
    lines = (tmp_path / "arcs.csv").read_text().splitlines()
    assert lines[0] == "# manifest: manifest.json" and lines[1] == "arc,k,re,im"
    assert max(abs(float(row.split(",")[3])) for row in lines[2:]) < 4e-6


def test_outputs_are_deterministic(capsys, tmp_path):
    for sub in ("a", "b"):
        code, _, _ = run(capsys, "coeffs", "generate", "--curve", DATA / "g2_generic.json",
                         "--out", tmp_path / sub, "--window", 10)
        assert code == 0
    for f in ("coeffs.csv", "manifest.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_manifest_records_inputs_and_outputs(capsys, tmp_path):
    run(capsys, "periods", "--curve", DATA / "g1_complex.json", "--out", tmp_path)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["command"] == "periods"
    assert man["config"]["tol_quad"] == 1e-12
    assert "periods.json" in man["outputs"]
    assert json.loads((tmp_path / "periods.json").read_text())["manifest"] == "manifest.json"


def test_oracle(capsys, tmp_path):
    code, _, err = run(capsys, "oracle", "--curve", DATA / "g0.json", "--grid=-2,2,0.5,0.5,3,1",
                       "--lyapunov-n", 2000, "--finite-section", 50, "--out", tmp_path)
    assert code == 0, err
    rows = (tmp_path / "lyapunov.csv").read_text().splitlines()[2:]
    for row in rows:
        _, _, gamma, half_h = map(float, row.split(","))
        assert abs(gamma - half_h) < 1e-2
    assert "diagnostic" in (tmp_path / "finite_section.csv").read_text()


def test_oracle_requires_grid(capsys):
    code, _, _ = run(capsys, "oracle", "--curve", DATA / "g0.json")
    assert code == 2


def test_theta_eval(capsys, tmp_path):
    inp = tmp_path / "in.json"
    inp.write_text(json.dumps({"tau": [[[0.0, 1.0]]], "z": [[[0.0, 0.0]], [[0.5, 0.0]]]}))
    code, out, _ = run(capsys, "theta", "eval", "--input", inp)
    assert code == 0
    vals = json.loads(out)["theta"]
    # theta(0 | i) = pi^(1/4) / Gamma(3/4)
    assert vals[0][0] == pytest.approx(1.0864348112133080, abs=1e-12)


def test_console_script_installed():
    res = subprocess.run(["finitegap-toda", "curve", "--curve", str(DATA / "g0.json")],
                         capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["genus"] == 0
