import json

import pytest

from npc.cli import main
from npc.scenario import standard_scenarios


@pytest.fixture()
def scenario_file(tmp_path):
    p = tmp_path / "path.json"
    p.write_text(standard_scenarios()["path-tripod"].to_json())
    return p


def test_run_and_report(tmp_path, scenario_file, capsys, monkeypatch):
    monkeypatch.setenv("NPC_THREADS", "3")
    out = tmp_path / "run"
    assert main(["run", "--scenario", str(scenario_file), "--out", str(out)]) == 0
    for name in ("scenario.json", "problem.json", "result.json", "reports.json", "energy_profile.csv"):
        assert (out / name).exists()
    capsys.readouterr()
    assert main(["report", "--format", "csv", "--input", str(out)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "name,gate,passed,max_violation,tolerance,notes" and lines[1].startswith("solve,exact,1")
    assert main(["report", "--format", "json", "--input", str(out / "reports.json")]) == 0
    assert isinstance(json.loads(capsys.readouterr().out), list)


def test_failing_hard_gate_sets_exit_code(tmp_path):
    data = standard_scenarios()["path-tripod"].to_dict()
    data["solver"] = {"max_sweeps": 2}
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(data))
    assert main(["check", "subharmonicity", "--scenario", str(p)]) == 1


def test_check_single(scenario_file, capsys):
    assert main(["check", "zzz", "--scenario", str(scenario_file), "--json"]) == 0
    out = capsys.readouterr().out
    assert "[PASS] zzz" in out
    with pytest.raises(SystemExit):
        main(["check", "nonsense", "--scenario", str(scenario_file)])


def test_refine_writes_study(tmp_path, scenario_file):
    assert main(["refine", "--levels", "2", "--scenario", str(scenario_file), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "path-tripod.csv").read_text().startswith("level,mesh_scale")


def test_scenarios_command(tmp_path):
    assert main(["scenarios", "--out", str(tmp_path)]) == 0
    assert len(list(tmp_path.glob("*.json"))) == 5
