import json
from pathlib import Path

import numpy as np
import pytest

from klslab import cli, tensor
from klslab.config import ConfigError, parse_config
from klslab.report import CheckRecord, VerificationReport, aggregate


def _write(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _read_tree(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------


def test_parse_config_basic():
    cfg = parse_config("family = uniform-box  # comment\nd = 3\nlow = -1\nhigh = 1\n"
                       "d_list = logspace:3:12:10\nrecord_times = 0.25, 0.5\n")
    assert cfg.family == "uniform-box" and cfg.d == 3
    assert cfg.d_list[0] == 1000 and cfg.d_list[-1] == 10**12 and len(cfg.d_list) == 10
    assert cfg.record_times == [0.25, 0.5]


@pytest.mark.parametrize("text, line, fragment", [
    ("d = 3\nbogus = 1\n", 2, "unknown key"),
    ("d = 3\nd = 4\n", 2, "duplicate"),
    ("T = 0.1\ndt = 0.5\n", 2, "exceeds"),
    ("q = x\n", 1, "bad value"),
    ("\n\nsuite = nope\n", 3, "unknown suite"),
    ("just words\n", 1, "expected"),
])
def test_parse_config_errors(text, line, fragment):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, "f.cfg")
    assert exc.value.line == line
    assert f"f.cfg:{line}:" in str(exc.value) and fragment in str(exc.value)


# ---------------------------------------------------------------------------
# report schema
# ---------------------------------------------------------------------------


def test_fail_status_requires_hard_gate():
    with pytest.raises(ValueError):
        CheckRecord(check="x", statistic=1.0, threshold=0.0, status="fail")
    rep = VerificationReport([CheckRecord(check="x", statistic=1.0, threshold=2.0, status="flag")])
    assert rep.exit_code() == 0
    rep.add(CheckRecord(check="y", statistic=1.0, threshold=0.0, status="fail", hard=True))
    assert rep.exit_code() == 1
    doc = json.loads(rep.to_json())
    assert doc["summary"]["fail"] == 1 and doc["summary"]["flag"] == 1


def test_aggregate_picks_worst():
    recs = [CheckRecord(check="a", statistic=s, threshold=1.0, status="pass" if s <= 1 else "flag",
                        lhs=s, rhs=1.0) for s in (0.2, 1.5, 0.9)]
    agg = aggregate("a", recs)
    assert agg.status == "flag" and agg.violations == 1 and agg.seeds == 3


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def test_bounds_stdout_default(tmp_path, capsys):
    cfg = _write(tmp_path, "d_list = logspace:3:12:10\n")
    code = cli.main(["bounds", "--config", cfg])
    out = capsys.readouterr()
    lines = out.out.strip().splitlines()
    assert lines[0] == "d,kls_original,lee_vempala,main_thm,ell_star,exponent"
    assert len(lines) == 11
    sidecar = json.loads(out.err)
    assert sidecar["constants"]["c"] == 1.0 and sidecar["crossover"]["log_d"] > 0
    # the alpha-recursion gate is red at c = 1
    assert sidecar["recursion_gate"]["status"] == "fail"
    assert code == 1


def test_bounds_empty_list_is_usage_error(tmp_path, capsys):
    assert cli.main(["bounds", "--config", _write(tmp_path, "c = 1\n")]) == 2
    assert "d_list" in capsys.readouterr().err


def test_bad_config_exit_2(tmp_path, capsys):
    cfg = _write(tmp_path, "T = 0.1\ndt = 0.5\n", "bad.cfg")
    assert cli.main(["simulate", "--config", cfg]) == 2
    assert "bad.cfg:2:" in capsys.readouterr().err
    assert cli.main(["verify", "--config", _write(tmp_path, "suite = nope\n")]) == 2
    assert cli.main(["verify", "--config", str(tmp_path / "missing.cfg")]) == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["explode", "--config", cfg])
    assert exc.value.code == 2


def test_verify_trace_passes(tmp_path):
    cfg = _write(tmp_path, "suite = trace\ncases = 1000\nd_max = 8\n")
    assert cli.main(["verify", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    doc = json.loads((tmp_path / "o" / "report.json").read_text())
    rec = doc["records"][0]
    assert rec["check"] == "trace_inequality" and rec["violations"] == 0 and rec["seeds"] == 1000


SMALL_ALL = """suite = all
d = 3
n_atoms = 300
paths = 2
T = 0.2
dt = 0.02
cases = 20
atom_sample = 5
"""


def test_verify_all_with_corrupted_trace_check(tmp_path, monkeypatch):
    real = tensor.check_trace_inequality

    def corrupted(G, F, delta):
        r = real(G, F, delta)
        lhs = r.rhs + abs(r.lhs) + 1.0
        return tensor.GateResult(lhs <= r.rhs + r.tol, lhs, r.rhs, r.tol)

    cfg = _write(tmp_path, SMALL_ALL)
    assert cli.main(["verify", "--config", cfg, "--out", str(tmp_path / "ok")]) == 0
    monkeypatch.setattr(tensor, "check_trace_inequality", corrupted)
    assert cli.main(["verify", "--config", cfg, "--out", str(tmp_path / "bad")]) == 1
    doc = json.loads((tmp_path / "bad" / "report.json").read_text())
    failed = [r["check"] for r in doc["records"] if r["status"] == "fail"]
    assert failed == ["trace_inequality"]


def test_simulate_writes_one_csv_per_path(tmp_path):
    cfg = _write(tmp_path, "d = 2\nn_atoms = 200\npaths = 100\nT = 0.05\ndt = 0.01\ndiagnostics = false\n")
    out = tmp_path / "sim"
    assert cli.main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    csvs = sorted((out / "paths").glob("*.csv"))
    assert len(csvs) == 100
    head = csvs[0].read_text().splitlines()
    assert head[0] == "t,gamma,spec_Q,g_E,qv_rate,v_norm,delta" and len(head) == 7
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["paths"]) == 100
    assert summary["environment"]["master_seed"] == 0


@pytest.mark.parametrize("command, text", [
    ("simulate", "d = 2\nn_atoms = 200\npaths = 3\nT = 0.1\ndt = 0.01\n"),
    ("verify", SMALL_ALL),
    ("bounds", "d_list = 1000, 1e6\n"),
    ("report", "family = uniform-box\nd = 2\nlow = -1\nhigh = 1\nn_atoms = 300\npaths = 4\n"
               "T = 0.1\ndt = 0.01\ndirections = 2\n"),
])
def test_outputs_byte_identical(tmp_path, command, text):
    cfg = _write(tmp_path, text)
    a, b = tmp_path / "a", tmp_path / "b"
    ca = cli.main([command, "--config", cfg, "--seed", "7", "--out", str(a)])
    cb = cli.main([command, "--config", cfg, "--seed", "7", "--out", str(b)])
    assert ca == cb
    ta, tb = _read_tree(a), _read_tree(b)
    assert ta and ta == tb


def test_seed_changes_output(tmp_path):
    cfg = _write(tmp_path, "d = 2\nn_atoms = 200\npaths = 2\nT = 0.1\ndt = 0.01\n")
    cli.main(["simulate", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "a")])
    cli.main(["simulate", "--config", cfg, "--seed", "2", "--out", str(tmp_path / "b")])
    assert _read_tree(tmp_path / "a") != _read_tree(tmp_path / "b")


def test_thread_cap_does_not_change_results(tmp_path, monkeypatch):
    cfg = _write(tmp_path, "d = 2\nn_atoms = 200\npaths = 6\nT = 0.1\ndt = 0.01\n")
    cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")])
    monkeypatch.setenv("KLSLAB_THREADS", "4")
    cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "b")])
    assert _read_tree(tmp_path / "a") == _read_tree(tmp_path / "b")


def test_report_command(tmp_path):
    cfg = _write(tmp_path, "family = gaussian\nd = 2\nn_atoms = 300\npaths = 4\nT = 0.1\ndt = 0.01\n"
                           "directions = 4\n")
    assert cli.main(["report", "--config", cfg, "--out", str(tmp_path / "r")]) == 0
    rows = (tmp_path / "r" / "isoperimetry.csv").read_text().splitlines()
    assert rows[0] == "kind,value,direction_1,direction_2,threshold"
    kinds = [r.split(",")[0] for r in rows[1:]]
    assert kinds == ["upper-via-halfspace", "conductance-proxy", "lower-via-gaussian-component"]
    doc = json.loads((tmp_path / "r" / "isoperimetry.json").read_text())
    assert doc["records"][0]["status"] == "pass"
