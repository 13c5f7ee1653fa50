import json
import math
import subprocess
import sys

import pytest

from randcert.cli import EXIT_INFEASIBLE, EXIT_INPUT, EXIT_OK, main
from randcert.conic import import_sdpa


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_solve_uniform_file(capsys, data_dir):
    code, out, err = run(capsys, "solve", "--behavior", str(data_dir / "uniform_222.json"), "--level", "1")
    assert code == EXIT_OK
    assert json.loads(out)["value"] == pytest.approx(1.0, abs=1e-6)
    assert err.startswith("G = ")


def test_solve_correlator_file(capsys, data_dir):
    code, out, _ = run(capsys, "solve", "--behavior", str(data_dir / "chsh_correlators.json"),
                       "--target", "global:1,1")
    assert code == EXIT_OK
    assert json.loads(out)["value"] == pytest.approx((2 + math.sqrt(2)) / 8, abs=2e-6)


def test_solve_bell_mode(capsys, tmp_path):
    out_file = tmp_path / "sol.json"
    code, out, _ = run(capsys, "solve", "--mode", "bell:chsh=2.0", "--out", str(out_file))
    assert code == EXIT_OK and out == ""
    d = json.loads(out_file.read_text())
    assert d["mode"] == "bell" and d["value"] == pytest.approx(1.0, abs=1e-6)


def test_bell_values_default_to_behavior(capsys):
    base = ["solve", "--model", "chsh", "--v", "0.9", "--level", "1"]
    implicit = run(capsys, *base, "--mode", "bell:chsh")
    explicit = run(capsys, *base, "--mode", f"bell:chsh={0.9 * 2 * math.sqrt(2)!r}")
    assert implicit[0] == explicit[0] == EXIT_OK
    assert json.loads(implicit[1])["value"] == pytest.approx(json.loads(explicit[1])["value"], abs=1e-9)


def test_export_sdpa(capsys, tmp_path):
    path = tmp_path / "prog.dat-s"
    code, _, _ = run(capsys, "solve", "--model", "chsh", "--v", "0.9", "--level", "1", "--export-sdpa", str(path))
    assert code == EXIT_OK
    prog = import_sdpa(path.read_text())
    assert prog.psd_dims == (5, 5)


def test_certificate_round_trip(capsys, tmp_path):
    path = tmp_path / "cert.json"
    code, _, err = run(capsys, "certificate", "--model", "chsh", "--v", "0.9", "--target", "global:1,1",
                       "--out", str(path))
    assert code == EXIT_OK and "verified=True" in err
    doc = json.loads(path.read_text())
    assert abs(doc["chsh_family_fit"]["f22"] - 1) > 0.02
    code, out, err = run(capsys, "certificate", "--load", str(path), "--model", "chsh", "--v", "0.85")
    assert code == EXIT_OK and "certified bound" in err
    assert json.loads(out)["verified"] is True


def test_validate(capsys, tmp_path, data_dir):
    assert run(capsys, "validate", "--behavior", str(data_dir / "uniform_222.json"))[0] == EXIT_OK
    bad = json.loads((data_dir / "uniform_222.json").read_text())
    bad["p"][0] = 0.9
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    assert run(capsys, "validate", "--behavior", str(path))[0] == EXIT_INPUT


def test_local_bound(capsys):
    code, out, _ = run(capsys, "local-bound", "chsh")
    assert code == EXIT_OK and out.startswith("local bound 2 ")
    assert run(capsys, "local-bound", "i1beta:0.5")[1].startswith("local bound 2.5")


def test_behavior_command(capsys):
    code, out, _ = run(capsys, "behavior", "--model", "cglmp", "--alpha", "0.6")
    assert code == EXIT_OK and json.loads(out)["scenario"]["da"] == 3


def test_input_errors(capsys):
    assert run(capsys, "solve", "--model", "chsh", "--target", "local:5")[0] == EXIT_INPUT
    assert run(capsys, "solve", "--model", "partial")[0] == EXIT_INPUT
    assert run(capsys, "solve", "--behavior", "/nonexistent.json")[0] == EXIT_INPUT
    assert run(capsys, "solve", "--mode", "bell:nosuch=1")[0] == EXIT_INPUT
    assert run(capsys, "solve", "--model", "chsh", "--v", "abc")[0] == EXIT_INPUT
    assert run(capsys, "frobnicate")[0] == EXIT_INPUT


def test_pr_box_is_infeasible(capsys):
    code, _, err = run(capsys, "solve", "--model", "pr-box", "--level", "1")
    assert code == EXIT_INFEASIBLE and "infeasible" in err
    code, out, _ = run(capsys, "solve", "--model", "pr-box", "--ns")
    assert code == EXIT_OK and json.loads(out)["value"] == pytest.approx(0.5, abs=1e-7)


def test_sweep_csv(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["sweep", "chsh-noise", "--grid", "0.9,1", "--level", "1"]
    assert main(args + ["--csv", str(a)]) == EXIT_OK
    assert main(args + ["--csv", str(b), "--workers", "2"]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().count("\n") == 5


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "randcert", "local-bound", "cglmp"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and res.stdout.startswith("local bound 2")
