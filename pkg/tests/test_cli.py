import csv
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from scfdyn import cli
from scfdyn.scalar import QuadSurd
from fractions import Fraction

COMMANDS = ("expand", "dual-expand", "convergents", "nat-ext", "spectrum", "mu-check", "cstar",
            "evt-digits", "evt-geodesic", "excursions", "crossings")


def run_json(tmp_path, *argv):
    out = tmp_path / "out.json"
    assert cli.run(list(argv) + ["--output", str(out)]) == 0
    return json.loads(out.read_text())


def run_csv(tmp_path, *argv):
    out = tmp_path / "out.csv"
    assert cli.run(list(argv) + ["--output", str(out)]) == 0
    return list(csv.reader(out.open()))


@pytest.fixture(autouse=True)
def timed():
    t = time.time()
    yield
    assert time.time() - t < 60


def test_parse_scalar_forms():
    assert cli.parse_scalar("0.25") == 0.25
    assert cli.parse_scalar("3/4") == Fraction(3, 4)
    assert cli.parse_scalar("0.1", exact=True) == Fraction(1, 10)
    assert cli.parse_scalar("sqrt3-1") == QuadSurd.sqrt(3) - 1
    assert cli.parse_scalar("2-sqrt(3)") == 2 - QuadSurd.sqrt(3)
    assert cli.parse_scalar("-1/2+1/10*sqrt(65)") == (QuadSurd.sqrt(65) - 5) / 10
    with pytest.raises(ValueError):
        cli.parse_scalar("abc")


def test_expand(tmp_path):
    out = run_json(tmp_path, "expand", "--x", "0.30622577", "--depth", "6")
    assert out["digits"][:2] == ["(2,-1)_e", "(3,+1)_o"]


def test_dual_expand(tmp_path):
    out = run_json(tmp_path, "dual-expand", "--y=-9/11+4/11*sqrt(3)", "--depth", "4")
    assert out["digits"] == ["(2,-1)_e", "(3,-1)_o"] * 2


def test_convergents(tmp_path):
    out = run_json(tmp_path, "convergents", "--digits", "(1,1)_e (1,1)_e (1,1)_e")
    assert [s["Q"] for s in out["states"]] == [1, 2, 5, 12]
    assert all(s["hat_identity"] and s["det_matches_sign_product"] for s in out["states"][1:])
    out = run_json(tmp_path, "convergents", "--x", "sqrt2-1", "--depth", "3")
    assert out["digits"] == ["(1,+1)_e"] * 3


def test_nat_ext(tmp_path):
    out = run_json(tmp_path, "nat-ext", "--x", "0.4", "--y", "0", "--steps", "1")
    assert out["orbit"][1]["j"] == -1 and out["orbit"][1]["y"] == 0.5


def test_spectrum(tmp_path):
    out = run_json(tmp_path, "spectrum", "--grid", "512", "--cutoff", "2000")
    assert abs(out["leading_eigenvalue"] - 1) < 1e-3 and out["second_modulus_estimate"] < 1


def test_mu_check(tmp_path):
    out = run_json(tmp_path, "mu-check", "--boxes", "5", "--n-max", "5")
    assert out["max_abs_difference"] < 1e-8 and len(out["superlevel"]) == 5


def test_cstar(tmp_path):
    out = run_json(tmp_path, "cstar", "--iters", "100000", "--seed", "7")
    assert out["runs"][0]["seed"] == 7
    assert abs(out["mean_convergent"] - 3.75) < 0.05 and abs(out["mean_birkhoff"] - 3.75) < 0.05


def test_evt_digits_csv_and_summary(tmp_path):
    rows = run_csv(tmp_path, "evt-digits", "--n", "1000", "--samples", "2000", "--y", "0.5,1,2,4",
                   "--seed", "1")
    assert rows[0] == ["y", "empirical", "theoretical", "stderr", "M", "N_or_T", "measure", "seed"]
    for r in rows[1:]:
        assert float(r[2]) == float(np.exp(-1 / float(r[0])))
    summary = json.loads((tmp_path / "out.json").read_text())
    assert summary["config"]["seed"] == 1 and "pass" in summary


def test_evt_digits_bytes_reproducible(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    argv = ["evt-digits", "--n", "1000", "--samples", "1500", "--seed", "9", "--measure", "mu"]
    assert cli.run(argv + ["--output", str(a)]) == 0
    assert cli.run(argv + ["--output", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_evt_geodesic(tmp_path):
    rows = run_csv(tmp_path, "evt-geodesic", "--t", "1000", "--samples", "1500", "--y", "1,2")
    assert len(rows) == 3 and rows[1][6] == "mu_tilde"
    summary = json.loads((tmp_path / "out.json").read_text())
    assert "return_concentration" in summary


def test_excursions(tmp_path):
    rows = run_csv(tmp_path, "excursions", "--x", "sqrt7-2", "--y", "1/5", "--count", "5")
    assert rows[0] == ["n", "digit", "r_n", "T_n", "h_n"] and len(rows) == 6
    rows = run_csv(tmp_path, "excursions", "--forward", "37/10", "--backward=-1/2", "--count", "2")
    assert rows[1][1] == "(2,-1)_e"


def test_crossings(tmp_path):
    out = run_json(tmp_path, "crossings", "--x", "sqrt7-2", "--y", "1/5", "--count", "8")
    assert out["mismatches"] == 0 and len(out["excursions"]) == 8


def test_exit_codes(tmp_path, capsys):
    assert cli.run(["expand", "--x", "2"]) == cli.EXIT_INVALID
    assert cli.run(["expand", "--x", "0.3", "--bogus", "1"]) == cli.EXIT_INVALID
    assert cli.run(["expand"]) == cli.EXIT_INVALID
    assert cli.run(["frobnicate"]) == cli.EXIT_INVALID
    assert cli.run(["evt-digits", "--samples", "10"]) == cli.EXIT_INVALID
    assert cli.run(["spectrum", "--grid", "128", "--cutoff", "50", "--tol", "1e-15",
                    "--max-iter", "2"]) == cli.EXIT_NONCONVERGENCE
    assert cli.run(["excursions", "--forward", "3", "--backward=-1/2"]) == cli.EXIT_ESCAPE
    assert cli.run(["crossings", "--x", "1/3", "--y", "0"]) == cli.EXIT_ESCAPE
    err = capsys.readouterr().err
    assert "invalid input" in err and "escape" in err and "no convergence" in err


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"x": "0.30622577", "depth": 3}))
    out = run_json(tmp_path, "expand", "--config", str(cfg))
    assert len(out["digits"]) == 3
    out = run_json(tmp_path, "expand", "--config", str(cfg), "--depth", "1")
    assert len(out["digits"]) == 1
    cfg.write_text(json.dumps({"samples": 1200, "n": 1000, "y": [1, 2], "min-samples": 10}))
    rows = run_csv(tmp_path, "evt-digits", "--config", str(cfg))
    assert rows[1][4] == "1200" and len(rows) == 3
    cfg.write_text(json.dumps({"nonsense": 1}))
    assert cli.run(["expand", "--config", str(cfg)]) == cli.EXIT_INVALID
    cfg.write_text(json.dumps({"rule": "gauss"}))
    assert cli.run(["spectrum", "--config", str(cfg)]) == cli.EXIT_INVALID
    assert cli.run(["expand", "--config", str(tmp_path / "missing.json")]) == cli.EXIT_INVALID


def test_config_keys_mirror_flags():
    parser = cli.build_parser()
    for name in COMMANDS:
        sp = cli._subparser(parser, name)
        help_text = sp.format_help()
        for act in sp._actions:
            for opt in act.option_strings:
                assert opt in help_text
        dests = {a.dest for a in sp._actions if a.option_strings} - {"help"}
        flags = {a.option_strings[-1].lstrip("-").replace("-", "_")
                 for a in sp._actions if a.option_strings} - {"help"}
        assert dests == flags


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "outdir"))
    assert cli.run(["expand", "--x", "0.4", "--depth", "2"]) == 0
    out = json.loads((tmp_path / "outdir" / "expand.json").read_text())
    assert out["digits"][0] == "(1,+1)_e"


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "scfdyn", "expand", "--x", "0.75", "--depth", "3"],
                       capture_output=True, text=True, timeout=60)
    assert r.returncode == 0 and json.loads(r.stdout)["terminated"] is True
    r = subprocess.run([sys.executable, "-m", "scfdyn", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for name in COMMANDS:
        assert name in r.stdout
