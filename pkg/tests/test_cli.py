import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from qtraj.cli import main, parse_seed_range, parse_state
from qtraj.io import read_csv

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "fixtures"


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


# -- parsing helpers ------------------------------------------------------------

def test_parse_seed_range():
    assert parse_seed_range("0..199") == (0, 199)
    assert parse_seed_range("7") == (7, 7)
    with pytest.raises(ValueError):
        parse_seed_range("5..2")


def test_parse_state():
    assert np.allclose(parse_state("mixed", 2), np.eye(2) / 2)
    assert np.allclose(parse_state("basis:1", 3), np.diag([0, 1, 0]))
    assert np.allclose(parse_state("diag:0.25,0.75", 2), np.diag([0.25, 0.75]))
    assert np.allclose(parse_state("pure:1,1", 2), np.full((2, 2), 0.5))
    for bad in ("basis:5", "diag:0.5,0.6", "nonsense", "diag:1,0,0"):
        with pytest.raises(ValueError):
            parse_state(bad, 2)


# -- validate -------------------------------------------------------------------

def test_validate_ok(capsys):
    code, out, _ = run(["validate", FIXTURE_DIR / "rotated_biased_qubit.json"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["status"] == "ok" and rep["dim"] == 2 and rep["tp_residual"] < 1e-12


def test_validate_bad_eta_names_column(capsys):
    code, _, err = run(["validate", FIXTURE_DIR / "invalid_eta.json"], capsys)
    assert code == 1
    assert "column 0" in err and "0.9" in err


def test_validate_completeness_residual(capsys):
    code, _, err = run(["validate", FIXTURE_DIR / "invalid_completeness.json"], capsys)
    assert code == 1
    assert "1.000e-03" in err


def test_validate_missing_file_and_bad_json(tmp_path, capsys):
    assert run(["validate", tmp_path / "nope.json"], capsys)[0] == 1
    p = tmp_path / "bad.json"
    p.write_text("{")
    assert run(["validate", p], capsys)[0] == 1
    assert run(["validate", "fixture:does_not_exist"], capsys)[0] == 1


def test_unknown_label_is_invalid_input(capsys):
    code, _, err = run(["contractivity", "fixture:rotated_biased_qubit", "--word", "9"], capsys)
    assert code == 1 and "UnknownLabel" in err


def test_exit_code_runtime(capsys, monkeypatch):
    import qtraj.channel
    from qtraj.errors import NoFixedPoint

    def boom(_):
        raise NoFixedPoint("no fixed point found")

    monkeypatch.setattr(qtraj.channel, "certify", boom)
    code, _, err = run(["analyze", "fixture:cycle"], capsys)
    assert code == 2 and "runtime error: NoFixedPoint" in err


def test_console_script_exit_codes():
    exe = shutil.which("qtraj")
    cmd = [exe] if exe else [sys.executable, "-m", "qtraj.cli"]
    ok = subprocess.run(cmd + ["validate", str(FIXTURE_DIR / "rotated_biased_qubit.json")], capture_output=True)
    bad = subprocess.run(cmd + ["validate", str(FIXTURE_DIR / "invalid_eta.json")], capture_output=True)
    assert ok.returncode == 0 and bad.returncode == 1


# -- analyze --------------------------------------------------------------------

@pytest.mark.parametrize("ref, irreducible, period", [
    ("fixture:rotated_biased_qubit", True, 1),
    ("fixture:amplitude_damping", False, None),
    ("fixture:cycle", True, 3),
])
def test_analyze(tmp_path, capsys, ref, irreducible, period):
    code, out, _ = run(["analyze", ref, "--out", tmp_path], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["irreducible"] is irreducible
    if irreducible:
        assert rep["period"] == period
    assert json.loads((tmp_path / "certificate.json").read_text()) == rep


def test_tolerance_override_is_echoed(capsys):
    code, out, _ = run(["analyze", "fixture:cycle", "--tol-peri", "1e-5"], capsys)
    assert code == 0 and json.loads(out)["tolerances"]["tol_peri"] == 1e-5


# -- simulate -------------------------------------------------------------------

def _simulate(out, capsys, ref="fixture:rotated_biased_qubit", extra=()):
    return run(["simulate", ref, "--seeds", "0..5", "--steps", "60", "--out", out, "--no-timestamp", *extra], capsys)


def test_simulate_outputs(tmp_path, capsys):
    code, out, _ = _simulate(tmp_path, capsys)
    assert code == 0
    summary = json.loads(out)
    assert summary["runs"] == 6 and summary["completed"] == 6
    meta, header, rows = read_csv(tmp_path / "run_3.csv")
    assert header == ["step", "outcome", "fidelity", "log_likelihood"]
    assert len(rows) == 61
    assert meta["seed"] == "3" and meta["rng"] == "PCG64" and "instrument_sha256" in meta
    assert all(k in meta for k in ("tol_cont", "tol_filter", "tol_prob"))
    assert "timestamp" not in meta
    _, agg_header, agg_rows = read_csv(tmp_path / "aggregate.csv")
    assert agg_header == ["step", "q10", "median", "q90", "mean"] and len(agg_rows) == 61
    for r in agg_rows:
        q10, med, q90 = map(float, r[1:4])
        assert q10 <= med <= q90


def test_simulate_is_byte_identical(tmp_path, capsys):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    _simulate(a, capsys)
    _simulate(b, capsys)
    _simulate(c, capsys, extra=("--jobs", "2"))
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir()) == sorted(p.name for p in c.iterdir())
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes() == (c / n).read_bytes()


def test_simulate_timestamp_only_in_metadata(tmp_path, capsys):
    _simulate(tmp_path / "a", capsys)
    run(["simulate", "fixture:rotated_biased_qubit", "--seeds", "0..5", "--steps", "60",
         "--out", tmp_path / "b"], capsys)
    ta = (tmp_path / "a" / "run_0.csv").read_text().splitlines()
    tb = (tmp_path / "b" / "run_0.csv").read_text().splitlines()
    assert "timestamp=" in tb[0] and "timestamp=" not in ta[0]
    assert ta[1:] == tb[1:]


def test_simulate_campaign_fixtures(tmp_path, capsys):
    # converging filter, uninformative record, and projective collapse onto the truth
    _, out, _ = _simulate(tmp_path / "r", capsys, extra=("--steps", "300"))
    assert json.loads(out)["final_fidelity"]["median"] > 0.99
    _, out, _ = run(["simulate", "fixture:identity_channel", "--seeds", "0..5", "--steps", "100",
                     "--rho0", "basis:0", "--rho-hat0", "mixed"], capsys)
    ff = json.loads(out)["final_fidelity"]
    assert abs(ff["median"] - 0.5) < 1e-9
    _, out, _ = run(["simulate", "fixture:projective", "--seeds", "0..5", "--steps", "5",
                     "--rho0", "diag:0.5,0.5", "--rho-hat0", "mixed"], capsys)
    assert json.loads(out)["final_fidelity"]["min"] > 0.5 - 1e-12


def test_simulate_kernel_condition_is_invalid_input(capsys):
    code, _, err = run(["simulate", "fixture:projective", "--seeds", "0..2", "--steps", "3",
                        "--rho0", "basis:0", "--rho-hat0", "basis:1"], capsys)
    assert code == 1 and "KernelConditionViolated" in err


def test_simulate_records_collapse(tmp_path, capsys):
    # a filter-mass threshold above every outcome probability forces a collapse at step 1
    code, out, _ = run(["simulate", "fixture:projective", "--seeds", "0..2", "--steps", "3",
                        "--rho0", "basis:0", "--rho-hat0", "mixed", "--tol-filter", "0.9", "--out", tmp_path], capsys)
    rep = json.loads(out)
    assert code == 0
    assert rep["collapsed"] == [0, 1, 2] and rep["completed"] == 0
    _, header, rows = read_csv(tmp_path / "collapsed.csv")
    assert header == ["seed", "step", "label", "mass"] and len(rows) == 3
    assert all(r[1] == "1" for r in rows)


# -- contractivity --------------------------------------------------------------

def test_contractivity_word(tmp_path, capsys):
    code, out, _ = run(["contractivity", "fixture:rotated_biased_qubit", "--word", "1,2", "--out", tmp_path], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["certified"] and rep["defect"] <= 1e-6
    _, header, rows = read_csv(tmp_path / "defect_trace.csv")
    assert header == ["length", "defect"] and rows
    text = (tmp_path / "estimates.txt").read_text()
    assert "[Z_est] 2x2" in text and "[X_est] 2x2" in text


def test_contractivity_search_and_negative_control(capsys):
    _, out, _ = run(["contractivity", "fixture:rank_one_outcome"], capsys)
    assert json.loads(out)["certified"] and json.loads(out)["word_length"] == 1
    _, out, _ = run(["contractivity", "fixture:identity_channel", "--max-len", "200"], capsys)
    assert not json.loads(out)["certified"]


def test_contractivity_nd(capsys):
    code, out, _ = run(["contractivity", "fixture:rotated_biased_qubit", "--word", "1,2", "--nd",
                        "--nd-subspaces", "5", "--nd-word-len", "3"], capsys)
    assert code == 0 and "non_darkness" in json.loads(out)


# -- invariant ------------------------------------------------------------------

def test_invariant_outputs(tmp_path, capsys):
    code, out, _ = run(["invariant", "fixture:rotated_biased_qubit", "--samples", "200", "--burn-in", "100",
                        "--thin", "2", "--ergodic-steps", "1000", "--out", tmp_path, "--no-timestamp"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert len(rep["w1"]["pairs"]) == 1 and len(rep["w1"]["push"]) == 2
    assert {e["rho0"] for e in rep["ergodic"]} == {"basis:0", "mixed"}
    meta, header, rows = read_csv(tmp_path / "atoms_0.csv")
    assert header[-1] == "weight" and len(header) == 9 and len(rows) == 200
    assert abs(sum(float(r[-1]) for r in rows) - 1) < 1e-9
    _, header, rows = read_csv(tmp_path / "ergodic_1.csv")
    assert header == ["n", "purity", "proj:0"]
    assert int(rows[-1][0]) == 1000
    assert abs(float(rows[-1][1]) - rep["ergodic"][1]["means"]["purity"]) < 1e-12


def test_invariant_unknown_functional(capsys):
    code, _, err = run(["invariant", "fixture:rotated_biased_qubit", "--samples", "10", "--functional", "bogus"],
                       capsys)
    assert code == 1 and "bogus" in err


# -- help -----------------------------------------------------------------------

@pytest.mark.parametrize("cmd, defaults", [
    ("simulate", ["0..199", "500", "basis:0", "mixed"]),
    ("contractivity", ["500", "2000", "50", "6"]),
    ("invariant", ["2000", "1000", "10"]),
    ("analyze", ["1e-06", "1e-08", "1e-09"]),
])
def test_help_lists_defaults(capsys, cmd, defaults):
    with pytest.raises(SystemExit) as exc:
        main([cmd, "--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for d in defaults:
        assert f"(default: {d})" in " ".join(out.split())
