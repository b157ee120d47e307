"""Scenario parsing, CLI entry points, log outputs, determinism plumbing."""

import json

import pytest

from fleetmux.cli import main
from fleetmux.errors import ScenarioParseError
from fleetmux.runner import run_scenario
from fleetmux.scenario import (
    expand_fuzz,
    list_packaged_scenarios,
    load_scenario,
    parse_scenario,
)

MINI = """
version: 1
name: mini
seed: 9
ticks: 40
world_text: |
  @resolution 0.1
  @origin 0.0 0.0
  ##########
  #........#
  #........#
  ##########
net: {latency_ms: [0, 0], loss_prob: 0.0}
agents:
  - {id: r1, kind: robot, start: [0.5, 0.2, 0.0]}
  - {id: base1, kind: basestation}
timeline:
  - {tick: 5, action: select, base: base1, robots: [r1]}
  - {tick: 6, action: request_control, base: base1, robot: r1}
assertions:
  - {name: zero_lock_violations}
"""


def test_parse_minimal_scenario():
    sc = parse_scenario(MINI)
    assert sc.name == "mini"
    assert sc.roster == ["r1", "base1"]
    assert sc.net.loss_prob == 0.0
    assert len(sc.timeline) == 2


def test_overrides_apply():
    sc = parse_scenario(MINI, overrides={"seed": 77, "ticks": 20, "loss": 0.5})
    assert sc.seed == 77 and sc.ticks == 20 and sc.net.loss_prob == 0.5


@pytest.mark.parametrize(
    "mutation",
    [
        ("version: 1", "version: 3"),
        ("action: select", "action: warp"),
        ("tick: 5", "tick: 999"),
        ("kind: robot", "kind: drone"),
        ("- {name: zero_lock_violations}", "- {name: nonsense}"),
    ],
)
def test_bad_scenarios_rejected(mutation):
    old, new = mutation
    with pytest.raises(ScenarioParseError):
        parse_scenario(MINI.replace(old, new))


def test_duplicate_agent_ids_rejected():
    bad = MINI.replace("id: base1", "id: r1")
    with pytest.raises(ScenarioParseError):
        parse_scenario(bad)


def test_bundled_scenarios_all_load():
    names = list_packaged_scenarios()
    assert "two_operators_fuzz" in names and "explore_two_rooms" in names
    for name in names:
        sc = load_scenario(name)
        assert sc.ticks > 0


def test_fuzz_expansion_is_deterministic():
    sc = load_scenario("two_operators_fuzz")
    a = expand_fuzz(sc)
    b = expand_fuzz(sc)
    assert a == b
    raws = [e for e in a if e["action"] == "raw"]
    assert len(raws) == 10_000


def test_mini_scenario_runs_clean(tmp_path):
    sc = parse_scenario(MINI)
    res = run_scenario(sc, log_dir=tmp_path)
    assert res.ok
    assert (tmp_path / "events.log").exists()
    assert (tmp_path / "audit.log").exists()
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["scenario"] == "mini"
    assert metrics["assertions"][0]["ok"] is True


def test_cli_run_exit_codes(tmp_path, capsys):
    scenario_file = tmp_path / "mini.yaml"
    scenario_file.write_text(MINI)
    rc = main(["run", str(scenario_file), "--log", str(tmp_path / "logs")])
    assert rc == 0
    out = capsys.readouterr().out
    assert "[PASS] zero_lock_violations" in out
    assert (tmp_path / "logs" / "events.log").exists()

    rc = main(["run", str(tmp_path / "missing.yaml")])
    assert rc == 2


def test_cli_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    assert "convoy_l_route" in out


def test_cli_overrides_change_the_run(tmp_path):
    scenario_file = tmp_path / "mini.yaml"
    scenario_file.write_text(MINI)
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert main(["run", str(scenario_file), "--log", str(a)]) == 0
    assert main(["run", str(scenario_file), "--log", str(b), "--seed", "123", "--net.loss", "0.3"]) == 0
    assert (a / "events.log").read_bytes() != (b / "events.log").read_bytes()


def test_same_seed_byte_identical_logs(tmp_path):
    scenario_file = tmp_path / "mini.yaml"
    scenario_file.write_text(MINI)
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert main(["run", str(scenario_file), "--log", str(a)]) == 0
    assert main(["run", str(scenario_file), "--log", str(b)]) == 0
    assert (a / "events.log").read_bytes() == (b / "events.log").read_bytes()
    assert (a / "audit.log").read_bytes() == (b / "audit.log").read_bytes()
