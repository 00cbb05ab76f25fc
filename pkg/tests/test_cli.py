import json
import math
import subprocess
import sys

import pytest

from statmatch import cli
from statmatch import experiments as ex
from statmatch import lp
from statmatch.instance import make_instance, save_instance, top_bot_split


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def unit_file(tmp_path):
    p = tmp_path / "unit.json"
    save_instance(make_instance([1.0], [1.0], [1.0], {(0, 0): 1.0}), p)
    return str(p)


def test_solve_b1(capsys, tmp_path):
    code, out, _ = run(capsys, "solve", "--instance", "b1", "--n", "50", "--benchmark", "online",
                       "--out", str(tmp_path))
    assert code == 0
    obj = float(out.split("objective=")[1].split()[0])
    assert obj == pytest.approx((1 - 1 / math.e) / 2500, rel=1e-6)
    sol = lp.load_solution(tmp_path / "solution.json")
    assert sol.objective == pytest.approx(obj, rel=1e-8)


def test_solve_offline_unit(capsys, unit_file):
    code, out, err = run(capsys, "solve", "--instance", unit_file, "--benchmark", "offline")
    assert code == 0 and "objective=0.632120559" in out and "solve_time=" in err


def test_missing_file(capsys):
    code, _, err = run(capsys, "solve", "--instance", "/nonexistent/x.json")
    assert code == 2 and "not found" in err


def test_bad_json(capsys, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert run(capsys, "solve", "--instance", str(p))[0] == 2


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["solve"])
    assert e.value.code == 2


def test_simulate_reproducible(capsys, tmp_path):
    args = ["simulate", "--instance", "b3", "--n", "6", "--policy", "correlated", "--reps", "10",
            "--seed", "7", "--horizon", "200"]
    code1, out1, _ = run(capsys, *args, "--out", str(tmp_path / "a"))
    code2, out2, _ = run(capsys, *args, "--out", str(tmp_path / "b"))
    assert code1 == code2 == 0
    assert out1 == out2 and len(out1.splitlines()) == 11
    assert (tmp_path / "a" / "simulate.csv").read_bytes() == (tmp_path / "b" / "simulate.csv").read_bytes()
    assert json.loads((tmp_path / "a" / "simulate.json").read_text())[0]["policy"] == "correlated"


def test_simulate_no_match(capsys, unit_file):
    code, out, _ = run(capsys, "simulate", "--instance", unit_file, "--policy", "no-match", "--reps", "3",
                       "--horizon", "100")
    rows = out.splitlines()[1:]
    assert code == 0 and len(rows) == 3
    col = cli.sim.CSV_COLUMNS.index("reward_rate")
    assert all(float(r.split(",")[col]) == 0.0 for r in rows)


def test_simulate_balanced_needs_labels(capsys, unit_file, tmp_path):
    code, _, err = run(capsys, "simulate", "--instance", unit_file, "--policy", "balanced-greedy")
    assert code == 2 and "TOP/BOT" in err
    p = tmp_path / "tb.json"
    save_instance(top_bot_split(make_instance([1.0], [1.0], [1.0], {(0, 0): 1.0})), p)
    code, out, _ = run(capsys, "simulate", "--instance", str(p), "--policy", "balanced-greedy",
                       "--horizon", "100")
    assert code == 0 and out.splitlines()[1].startswith("balanced-greedy,")


def test_simulate_several_policies(capsys, unit_file):
    code, out, _ = run(capsys, "simulate", "--instance", unit_file, "--policy", "greedy", "--policy",
                       "correlated", "--reps", "2", "--horizon", "100")
    policies = [r.split(",")[0] for r in out.splitlines()[1:]]
    assert code == 0 and policies == ["greedy", "greedy", "correlated", "correlated"]


def test_classify_b3(capsys, tmp_path):
    code, out, _ = run(capsys, "classify", "--instance", "b3", "--n", "50", "--out", str(tmp_path))
    lines = out.splitlines()
    assert code == 0 and lines[-1] == "vwhc=true"
    assert lines[0] == "type_id,verdict,r_threshold,gain_share"
    assert lines[-2].startswith("50,HARD,")
    assert (tmp_path / "classification.csv").exists()


def test_classify_unit(capsys, unit_file):
    code, out, _ = run(capsys, "classify", "--instance", unit_file)
    assert code == 0 and out.splitlines()[-1] == "vwhc=false"
    assert out.splitlines()[1].startswith("0,EASY_CASE1,")


def test_classify_with_solution_file(capsys, unit_file, tmp_path):
    run(capsys, "solve", "--instance", unit_file, "--out", str(tmp_path))
    code, out, _ = run(capsys, "classify", "--instance", unit_file, "--solution", str(tmp_path / "solution.json"))
    assert code == 0 and "EASY_CASE1" in out


def test_classify_bad_epsilon(capsys):
    assert run(capsys, "classify", "--instance", "b3", "--epsilon", "0.2")[0] == 2
    assert run(capsys, "classify", "--instance", "b3", "--epsilon-prime", "0")[0] == 2


def test_experiment_pass(capsys, tmp_path):
    code, out, _ = run(capsys, "experiment", "ablation-b1", "--out", str(tmp_path))
    assert code == 0 and out.startswith("PASS  5")
    assert "PASS" in (tmp_path / "results.csv").read_text()


def test_experiment_failure_exit(capsys, monkeypatch):
    def failing(ctx):
        return ex.CriterionResult(4, "forced", False, {})

    monkeypatch.setitem(ex.CRITERIA, 4, failing)
    code, out, _ = run(capsys, "experiment", "lp-hand")
    assert code == 1 and out.startswith("FAIL")


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "statmatch.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("solve", "simulate", "classify", "experiment"):
        assert cmd in out.stdout
