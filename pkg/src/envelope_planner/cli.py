"""Command-line interface: plan a single cycle, run a full simulation, or
dump maneuver envelopes.

Exit codes: 0 on success, 2 when the no-feasible-candidate fallback engages,
3 on input errors.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .outputs import emit_outputs, write_envelope_dump
from .reasoning import NoFeasibleCandidate
from .scenario import ScenarioError, load_scenario
from .simulate import (
    SimConfig,
    SimulationTrace,
    initial_ego_state,
    mpc_step,
    run_simulation,
)

EXIT_OK = 0
EXIT_FALLBACK = 2
EXIT_INPUT_ERROR = 3


def _str2bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {value!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="envelope-planner",
        description="Combinatorial maneuver-envelope trajectory planner",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("plan", "run a single planning cycle and print the chosen maneuver"),
        ("simulate", "run the full receding-horizon simulation"),
        ("envelopes", "dump the merged maneuver envelopes for inspection"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--scenario", required=True, help="scenario YAML file")
        cmd.add_argument("--out", default="out", help="output directory")
        cmd.add_argument(
            "--seed",
            type=int,
            default=0,
            help="reserved; the pipeline is deterministic",
        )
        cmd.add_argument(
            "--parallel",
            type=_str2bool,
            default=False,
            help="plan maneuvers concurrently (true/false)",
        )
    return parser


def _cmd_plan(scenario, config) -> int:
    ego = initial_ego_state(scenario)
    try:
        result = mpc_step(scenario, ego, 0.0, config)
    except NoFeasibleCandidate:
        print("no feasible maneuver candidate; fallback would engage")
        return EXIT_FALLBACK
    decisions = ", ".join(
        f"{oid}={dec.value}" for oid, dec in result.trajectory.maneuver.items
    )
    print(f"chosen maneuver #{result.trajectory.maneuver.index}: {decisions or '(none)'}")
    print(f"semantics: {result.score.description.text()}")
    print(
        f"costs: j_traj={result.score.j_traj:.4f} "
        f"j_cons={result.score.j_cons:.4f} j_total={result.score.j_total:.4f}"
    )
    print(
        f"maneuvers: {result.diagnostics['enumerated']} enumerated, "
        f"{result.diagnostics['valid_envelopes']} valid, "
        f"{result.diagnostics['feasible']} feasible"
    )
    return EXIT_OK


def _cmd_simulate(scenario, config, out_dir) -> int:
    trace = run_simulation(scenario, config)
    paths = emit_outputs(trace, scenario, out_dir)
    final = trace.records[-1]
    print(f"simulated {len(trace.records)} cycles")
    print(f"decision switches: {trace.decision_switches}")
    print(f"final state: s={final.ego.s:.2f} m, v={final.ego.v:.2f} m/s")
    print(f"trace: {paths['trace']}")
    print(f"envelopes: {paths['envelopes']}")
    for plot in paths["plots"]:
        print(f"plot: {plot}")
    if trace.fallback_engaged:
        print("fallback engaged: maximum-deceleration stop")
        return EXIT_FALLBACK
    return EXIT_OK


def _cmd_envelopes(scenario, config, out_dir) -> int:
    ego = initial_ego_state(scenario)
    try:
        result = mpc_step(scenario, ego, 0.0, config)
    except NoFeasibleCandidate:
        print("no valid maneuver envelope at t=0")
        return EXIT_FALLBACK
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "envelopes.jsonl"
    trace = SimulationTrace(records=[_single_cycle_record(result, ego)])
    write_envelope_dump(trace, path)
    print(f"{len(result.envelopes)} maneuver envelopes written to {path}")
    return EXIT_OK


def _single_cycle_record(result, ego):
    from .simulate import CycleRecord

    return CycleRecord(
        time=0.0,
        ego=ego,
        maneuver_index=result.trajectory.maneuver.index,
        decisions={k: v.value for k, v in result.trajectory.maneuver.items},
        semantics=result.score.description.text(),
        j_traj=result.score.j_traj,
        j_cons=result.score.j_cons,
        j_total=result.score.j_total,
        enumerated=result.diagnostics["enumerated"],
        valid_envelopes=result.diagnostics["valid_envelopes"],
        feasible=result.diagnostics["feasible"],
        failures=result.diagnostics["failures"],
        solver_iterations=result.trajectory.solver_iterations,
        envelopes=result.envelopes,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    config = SimConfig(parallel=args.parallel)
    try:
        if args.command == "plan":
            return _cmd_plan(scenario, config)
        if args.command == "simulate":
            return _cmd_simulate(scenario, config, args.out)
        return _cmd_envelopes(scenario, config, args.out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
