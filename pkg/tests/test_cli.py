import csv
import json

import pytest

from cemech.cli import main
from cemech.output import TRACE_COLUMNS, sha256_file
from cemech.presets import bilateral_config

IMPLEMENTED = ["--state", "L,H", "--state", "H,H"]


def write_config(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_validate_full_bilateral_reports_failing_pairs(capsys):
    assert main(["validate", "--preset", "bilateral"]) == 2
    out = capsys.readouterr().out
    assert "lie (L,L) / true (H,L)" in out
    assert "lie (L,H) / true (L,L)" in out
    assert "validation: FAIL" in out


def test_validate_restricted_states_passes(capsys):
    assert main(["validate", "--preset", "bilateral", *IMPLEMENTED]) == 0
    assert "validation: PASS" in capsys.readouterr().out


def test_unknown_state_flag_is_a_validation_error(capsys):
    assert main(["validate", "--state", "M,H"]) == 2
    assert "not a state" in capsys.readouterr().err


def test_empty_states_rejected(tmp_path, capsys):
    cfg = bilateral_config()
    cfg["states"] = []
    assert main(["validate", "--config", write_config(tmp_path, cfg)]) == 2
    assert "states" in capsys.readouterr().err


def test_broken_dictator_lottery_names_the_agent(tmp_path, capsys):
    cfg = bilateral_config()
    cfg["dictator_lotteries"]["buyer"] = {"H": "(0,0,0)", "L": "(1,-15,15)"}
    assert main(["validate", "--config", write_config(tmp_path, cfg), *IMPLEMENTED]) == 2
    out = capsys.readouterr().out
    assert "[FAIL] buyer true H: report H vs report L" in out


def test_malformed_json_is_a_validation_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["validate", "--config", str(p)]) == 2


def test_missing_file_is_an_io_error(tmp_path):
    assert main(["validate", "--config", str(tmp_path / "nope.json")]) == 4


def test_unwritable_output_is_an_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["build-mechanism", "--csv", str(blocker / "x.csv")]) == 4


def test_build_mechanism_prints_parameters(capsys):
    assert main(["build-mechanism"]) == 0
    out = capsys.readouterr().out
    assert "message_counts: [16, 16]" in out
    assert "epsilon: 1/4" in out


def test_solve_ce_exit_code_and_lp_dump(tmp_path, capsys):
    assert main(["solve-ce", "--state", "L,L"]) == 3
    assert "implemented=False" in capsys.readouterr().out
    lp = tmp_path / "lp.txt"
    js = tmp_path / "ce.json"
    assert main(["solve-ce", *IMPLEMENTED, "--dump-lp", str(lp), "--json", str(js)]) == 0
    text = (tmp_path / "lp.LH.txt").read_text()
    assert text.startswith("\\ 256 variables")
    assert "simplex:" in text
    res = json.loads(js.read_text())
    assert res["L,H"]["implemented"] and res["L,H"]["max_offpath_mass"] <= 1e-8


def test_witness_csv_for_failing_state(tmp_path):
    w = tmp_path / "w.csv"
    assert main(["solve-ce", "--state", "H,L", "--witness-csv", str(w)]) == 3
    rows = list(csv.DictReader(w.open()))
    assert rows and sum(float(r["prob"]) for r in rows) == pytest.approx(1.0)
    assert all(r["on_target"] == "False" for r in rows)


def test_seed_precedence(tmp_path, monkeypatch):
    def trace(*extra):
        out = tmp_path / "t.csv"
        assert main(["simulate", "--state", "L,H", "--iterations", "60", "--out", str(out), *extra]) == 0
        return out.read_text()

    monkeypatch.delenv("MECHSIM_SEED", raising=False)
    default = trace()
    assert trace("--seed", "0") == default  # preset seed is 0
    monkeypatch.setenv("MECHSIM_SEED", "9")
    from_env = trace()
    assert from_env == trace("--seed", "9")
    assert from_env != default
    assert trace("--seed", "0") == default  # the flag wins over the variable


def test_bad_seed_variable(monkeypatch):
    monkeypatch.setenv("MECHSIM_SEED", "abc")
    assert main(["simulate", "--state", "L,H", "--iterations", "10"]) == 2


def test_trace_csv_layout(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["simulate", "--state", "L,H", "--iterations", "25", "--record-every", "10",
                 "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == TRACE_COLUMNS
    body = rows[1:]
    assert len(body) == 3 * 2 * 16  # periods 10, 20, 25; two agents; 16 messages each
    assert sorted({int(r[0]) for r in body}) == [10, 20, 25]
    for period in (10, 20, 25):
        for agent in ("buyer", "seller"):
            probs = [float(r[3]) for r in body if int(r[0]) == period and r[1] == agent]
            assert sum(probs) == pytest.approx(1.0)


def test_simulate_svg_written(tmp_path):
    svg = tmp_path / "t.svg"
    assert main(["simulate", "--state", "L,H", "--iterations", "200", "--svg", str(svg)]) == 0
    text = svg.read_text()
    assert text.startswith("<svg") and "gains from trade" in text


def test_pipeline_halts_on_non_monotone_config(tmp_path, capsys):
    cfg = bilateral_config()
    keep = [["L", "L"], ["H", "L"]]
    cfg["states"] = keep
    cfg["scf"] = [e for e in cfg["scf"] if e["state"] in keep]
    cfg["challenge_scheme"] = [e for e in cfg["challenge_scheme"] if e["state"] in keep]
    out = tmp_path / "run"
    rc = main(["pipeline", "--config", write_config(tmp_path, cfg), "--out-dir", str(out)])
    assert rc == 2
    assert "lie (L,L) / true (H,L)" in capsys.readouterr().err
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["halted_at"] == "validate"
    assert not (out / "solve_ce.json").exists()


def run_pipeline(out, *extra):
    return main(["pipeline", *IMPLEMENTED, "--out-dir", str(out), "--seeds", "2",
                 "--iterations", "300", *extra])


def test_pipeline_manifest_is_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_pipeline(a) == 0
    assert run_pipeline(b) == 0
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    assert ma == mb
    names = {e["path"] for e in ma["files"]}
    assert {"validate.txt", "solve_ce.json", "simulate.json", "trace_HH_seed0.csv",
            "trace_HH_seed1.csv", "trace_HH_seed0.svg"} <= names
    for e in ma["files"]:
        assert sha256_file(a / e["path"]) == e["sha256"]


def test_pipeline_keep_going_reports_unverified(tmp_path):
    out = tmp_path / "run"
    rc = main(["pipeline", "--keep-going", "--state", "H,L", "--out-dir", str(out),
               "--seeds", "1", "--iterations", "50"])
    assert rc == 3
    verdicts = json.loads((out / "solve_ce.json").read_text())
    assert verdicts["H,L"]["implemented"] is False
    assert (out / "witness_HL.csv").exists()
