"""Command-line interface tests: subcommands, outputs, and exit codes."""

from pathlib import Path

import pytest

from envelope_planner.cli import EXIT_FALLBACK, EXIT_INPUT_ERROR, EXIT_OK, main

EMPTY_ROAD = """
reference_curve:
  waypoints: [[0.0, 0.0], [120.0, 0.0]]
lane_width: 3.5
ego_initial: {x: 0.0, y: 0.0, heading: 0.0, v: 8.0}
v_ref: 8.0
obstacles: []
sim_duration: 2.0
replan_period: 0.2
"""

BLOCKED_ROAD = """
reference_curve:
  waypoints: [[0.0, 0.0], [120.0, 0.0]]
lane_width: 3.5
ego_initial: {x: 0.0, y: 0.0, heading: 0.0, v: 8.0}
v_ref: 8.0
obstacles:
  - id: TRAP
    footprint: [[2.5, -3.4], [9.0, -3.4], [9.0, 3.4], [2.5, 3.4]]
    velocity: [0.0, 0.0]
sim_duration: 2.0
replan_period: 0.2
"""


@pytest.fixture
def empty_road(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text(EMPTY_ROAD)
    return path


def test_plan_subcommand(empty_road, tmp_path, capsys):
    code = main(["plan", "--scenario", str(empty_road), "--out", str(tmp_path / "o")])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "chosen maneuver" in out
    assert "j_total" in out


def test_simulate_subcommand_writes_outputs(empty_road, tmp_path, capsys):
    out_dir = tmp_path / "out"
    code = main(["simulate", "--scenario", str(empty_road), "--out", str(out_dir)])
    assert code == EXIT_OK
    assert (out_dir / "trace.csv").exists()
    assert (out_dir / "envelopes.jsonl").exists()
    assert (out_dir / "plots" / "s_t_diagram.svg").exists()
    assert (out_dir / "plots" / "d_s_path.svg").exists()
    assert (out_dir / "plots" / "velocity_profile.svg").exists()


def test_envelopes_subcommand(empty_road, tmp_path):
    out_dir = tmp_path / "env"
    code = main(["envelopes", "--scenario", str(empty_road), "--out", str(out_dir)])
    assert code == EXIT_OK
    assert (out_dir / "envelopes.jsonl").exists()


def test_missing_scenario_is_input_error(tmp_path, capsys):
    code = main(["plan", "--scenario", str(tmp_path / "nope.yaml")])
    assert code == EXIT_INPUT_ERROR


def test_invalid_scenario_is_input_error(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("not: [a, scenario")
    assert main(["plan", "--scenario", str(bad)]) == EXIT_INPUT_ERROR


def test_blocked_road_exits_with_fallback(tmp_path, capsys):
    path = tmp_path / "blocked.yaml"
    path.write_text(BLOCKED_ROAD)
    code = main(["simulate", "--scenario", str(path), "--out", str(tmp_path / "o")])
    assert code == EXIT_FALLBACK


def test_parallel_flag_parses(empty_road, tmp_path):
    code = main(
        [
            "simulate",
            "--scenario",
            str(empty_road),
            "--out",
            str(tmp_path / "p"),
            "--parallel",
            "true",
        ]
    )
    assert code == EXIT_OK
