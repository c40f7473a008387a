import json

import pytest

from epicontrol.cli import main
from epicontrol.io import read_csv


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_optimize_json_header(capsys):
    code, out, _ = run(capsys, "optimize", "--seed", "3")
    assert code == 0
    header = json.loads(out)["header"]
    for key in ("schema_version", "dt", "mu", "end_time_cap", "seed"):
        assert key in header
    assert header["seed"] == 3 and header["mu"] == 0.01 and header["end_time_cap"] == 6000
    assert header["label"] == "suppression"


def test_optimize_is_bit_stable(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["optimize", "--format", "csv", "--out", str(a)]) == 0
    assert main(["optimize", "--format", "csv", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    header, columns, rows = read_csv(a)
    assert columns[:7] == ["t", "S", "E", "I", "H", "R", "D"]


def test_sweep_csv_columns(tmp_path):
    out = tmp_path / "k.csv"
    code = main(["sweep", "--axis", "k", "--values", "100", "--seeds", "suppression", "--format", "csv",
                 "--out", str(out)])
    assert code == 0
    header, columns, rows = read_csv(out)
    assert columns[:5] == ["axis", "strategy", "cost_per_person", "end_time", "converged"]
    assert header["axis"] == "k" and "derived_rule" in header and len(rows) == 1


def test_stochastic_and_dp_commands(capsys, tmp_path):
    scenario = tmp_path / "small.json"
    scenario.write_text(json.dumps({
        "label": "small", "model": {"n_pop": 500}, "initial": {"s": 480, "e": 10, "i": 10, "h": 0, "r": 0, "d": 0},
    }))
    code, out, _ = run(capsys, "dp-solve", "--scenario", str(scenario), "--menu", "discrete")
    assert code == 0 and json.loads(out)["header"]["dk"] == 1
    code, out, _ = run(capsys, "simulate", "--scenario", str(scenario), "--seed", "4", "--format", "csv")
    assert code == 0 and out.startswith("# {") and "infection" in out
    code, again, _ = run(capsys, "simulate", "--scenario", str(scenario), "--seed", "4", "--format", "csv")
    assert again == out
    code, out, _ = run(capsys, "simulate", "--scenario", str(scenario), "--runs", "5", "--policy", "constant",
                       "--beta", "0.2")
    assert code == 0 and json.loads(out)["summary"]["n_runs"] == 5
    code, out, _ = run(capsys, "thresholds", "--scenario", str(scenario), "--fix", "s", "--value", "0")
    assert code == 0 and set(json.loads(out)["beta"]) == {0.87}
    code, out, _ = run(capsys, "eigen", "--beta", "0.11")
    assert code == 0 and json.loads(out)["stable"] is True


@pytest.mark.parametrize("argv", [
    ["optimize", "--scenario", "atlantis"],
    ["optimize", "--mu", "-1"],
    ["sweep", "--axis", "k", "--values", ""],
    ["eigen", "--s", "-5"],
    ["simulate", "--runs", "0"],
    ["thresholds", "--fix", "s", "--value", "0", "--vaccinated"],
])
def test_configuration_errors_exit_2(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and "configuration error" in err


def test_bad_arguments_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["optimize", "--format", "xml"])
    assert exc.value.code == 2


def test_run_failures_exit_1(capsys, tmp_path):
    code, _, err = run(capsys, "optimize", "--dt", "10")
    assert code == 1 and "run failed" in err
    code, _, _ = run(capsys, "sweep", "--axis", "k", "--values", "100", "--seeds", "suppression", "--dt", "10")
    assert code == 1
    code, _, err = run(capsys, "eigen", "--out", str(tmp_path / "missing" / "x.json"))
    assert code == 1 and "cannot write" in err
