import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from etclab.cli import main

GOLDEN = Path(__file__).parent / "golden" / "report_schema.json"


def skeleton(obj):
    """Key structure of a report with leaves replaced by type names."""
    if isinstance(obj, dict):
        return {k: skeleton(v) for k, v in sorted(obj.items())}
    if isinstance(obj, list):
        return [skeleton(obj[0])] if obj and not isinstance(obj[0], (int, float, str)) else "list"
    if isinstance(obj, bool):
        return "bool"
    if isinstance(obj, (int, float)):
        return "number"
    return "null" if obj is None else type(obj).__name__


@pytest.fixture(scope="module")
def ref_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("ref")
    code = main(["run", "example1", "--T-end", "50", "--out", str(out)])
    return code, out


def test_run_reference_writes_four_files(ref_run):
    code, out = ref_run
    assert code == 0
    assert sorted(p.name for p in out.iterdir()) == ["events.csv", "plot.svg", "report.json",
                                                     "trace.csv"]
    rep = json.loads((out / "report.json").read_text())
    assert rep["config"]["params"]["theta_true"] == 0.1534
    assert rep["config"]["sim"]["T_end"] == 50.0
    assert (out / "plot.svg").read_text().count("<polyline") >= 3


def test_precondition_violation_is_config_error(tmp_path, capsys):
    assert main(["run", "example1", "--set", "theta_true=3.0", "--out", str(tmp_path)]) == 2
    assert "theta_true" in capsys.readouterr().err
    assert not any(tmp_path.iterdir())


@pytest.mark.parametrize("argv", [
    ["run", "nope"],
    ["run", "example1", "--set", "bogus=1"],
    ["run", "example1", "--set", "novalue"],
    ["run", "example1", "--checks", "lyapunov,nope"],
    ["run", "example2", "--checks", "bibs"],
])
def test_config_errors(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path)]) == 2


def test_replay_corrupted_fixture_fails(ref_run, tmp_path):
    _, out = ref_run
    rows = list(csv.reader(open(out / "trace.csv")))
    rows[3001][1] = repr(float(rows[3001][1]) + 0.5)
    with open(tmp_path / "trace.csv", "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    (tmp_path / "events.csv").write_bytes((out / "events.csv").read_bytes())
    argv = ["run", "example1", "--replay", str(tmp_path), "--checks", "lyapunov,bibs,zeno"]
    assert main(argv) == 1
    rep = json.loads((tmp_path / "replay-report.json").read_text())
    assert not rep["analysis"]["passed"]


def test_replay_clean_trace_reproduces_report(ref_run, tmp_path):
    _, out = ref_run
    assert main(["replay", str(out), "--out", str(tmp_path)]) == 0
    live = json.loads((out / "report.json").read_text())["analysis"]
    again = json.loads((tmp_path / "replay-report.json").read_text())["analysis"]
    live.pop("termination"), again.pop("termination")
    assert live == again


def test_masp_command(capsys):
    assert main(["masp", "--U", "half_square", "--gamma", "two_square", "--R0", "1"]) == 0
    assert json.loads(capsys.readouterr().out)["period_T"] == pytest.approx(0.125, abs=1e-8)
    assert main(["masp", "--gamma", "linear"]) == 1
    assert "no positive MASP exists" in capsys.readouterr().err
    assert main(["masp", "--gamma", "nope"]) == 2


def test_masp_R0_sweep(capsys):
    Ts = []
    for R0 in ("1", "0.5"):
        assert main(["masp", "--gamma", "square_plus_quartic", "--R0", R0]) == 0
        Ts.append(json.loads(capsys.readouterr().out)["period_T"])
    assert Ts[1] >= Ts[0]


def _summary(path):
    return list(csv.DictReader(open(path / "summary.csv")))


def test_sweep_disturbance_monotone(tmp_path):
    code = main(["sweep", "example1_disturbed", "--param", "d_bar", "--values", "0.1,0.01",
                 "--jobs", "2", "--out", str(tmp_path)])
    assert code == 0
    rows = _summary(tmp_path)
    ub = [float(r["ultimate_bound"]) for r in rows]
    assert [float(r["value"]) for r in rows] == [0.1, 0.01]
    assert ub[1] <= ub[0]
    assert (tmp_path / "d_bar=0.1" / "report.json").exists()


def test_sweep_lambda_all_pass(tmp_path):
    code = main(["sweep", "example1", "--param", "lambda", "--values", "0.5,1,2",
                 "--jobs", "3", "--out", str(tmp_path)])
    assert code == 0
    assert [r["exit_code"] for r in _summary(tmp_path)] == ["0", "0", "0"]


def test_sweep_empty_values(tmp_path):
    assert main(["sweep", "example1", "--param", "lambda", "--values", "", "--out",
                 str(tmp_path)]) == 2


def test_sweep_worst_exit(tmp_path):
    code = main(["sweep", "example1", "--param", "theta_true", "--values", "0.1,3.0",
                 "--T-end", "0.5", "--out", str(tmp_path)])
    assert code == 2
    assert [r["exit_code"] for r in _summary(tmp_path)] == ["0", "2"]


def test_zeno_abort_exit_code(tmp_path):
    assert main(["run", "example1", "--set", "max_events=3", "--out", str(tmp_path)]) == 3
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["simulation"]["termination"] == "aborted"
    assert "Zeno suspicion" in rep["simulation"]["error"]


def test_yaml_config(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(
        "scenario: scalar_event\n"
        "params: {a: 0.1, k: 0.3}\n"
        "sim: {T_end: 2.0}\n"
        "trigger: {type: masp, gamma: square_plus_quartic, R0: 1.0}\n"
        "checks: [triggers, shadow, zeno]\n"
        "emit: {svg: false}\n")
    out = tmp_path / "o"
    assert main(["run", str(cfg), "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["config"]["trigger"]["type"] == "periodic"
    assert [c["name"] for c in rep["analysis"]["checks"]] == ["triggers", "shadow", "zeno"]
    assert not (out / "plot.svg").exists()
    bad = tmp_path / "bad.yaml"
    bad.write_text("scenario: example1\nwhatever: 1\n")
    assert main(["run", str(bad), "--out", str(out)]) == 2


def test_byte_identical_reruns(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["run", "example2", "--T-end", "2", "--out", str(d)]) == 0
    for name in ("trace.csv", "events.csv", "report.json", "plot.svg"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_report_schema_matches_golden(tmp_path):
    assert main(["run", "scalar_masp", "--T-end", "5", "--out", str(tmp_path)]) == 0
    got = skeleton(json.loads((tmp_path / "report.json").read_text()))
    assert got == json.loads(GOLDEN.read_text())


def test_list_scenarios(capsys):
    assert main(["list-scenarios"]) == 0
    out = capsys.readouterr().out
    for name in ("example1", "example2", "robust", "scalar_masp"):
        assert name in out


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "etclab", "masp"], capture_output=True, text=True)
    assert res.returncode == 0 and '"period_T"' in res.stdout
