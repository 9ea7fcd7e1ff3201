"""Receding-horizon simulation: predict, enumerate, plan, select, execute.

Each cycle rebuilds the maneuver envelopes from fresh predictions, plans
every surviving maneuver (optionally in parallel), selects by total cost
with maneuver-consistency, and executes the first replanning period of the
chosen trajectory under a perfect-tracking assumption.  The whole loop is a
deterministic function of the scenario and configuration.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .envelopes import EnvelopeConfig, ManeuverEnvelope, build_maneuver_envelopes
from .geometry import ReferenceCurve, project_to_frenet
from .planners import (
    InfeasiblePlan,
    LateralState,
    LongitudinalState,
    PlannedTrajectory,
    PlannerConfig,
    SolverFailure,
    WarmStart,
    shift_warm_start,
)
from .planners import plan_maneuver
from .reasoning import (
    CandidateScore,
    NoFeasibleCandidate,
    ReasoningWeights,
    SemanticDescription,
    select_trajectory,
)
from .scenario import Scenario, predict_obstacles


@dataclass(frozen=True)
class SimConfig:
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    envelope: EnvelopeConfig = field(default_factory=EnvelopeConfig)
    reasoning: ReasoningWeights = field(default_factory=ReasoningWeights)
    prediction_steps: int = 10
    prediction_dt: float = 0.4
    simultaneity_threshold: float = 0.2
    parallel: bool = False


@dataclass(frozen=True)
class EgoState:
    x: float
    y: float
    heading: float
    s: float
    d: float
    v: float
    a: float
    j: float
    kappa: float


def initial_ego_state(scenario: Scenario) -> EgoState:
    ego = scenario.ego_initial
    s, d = project_to_frenet((ego.x, ego.y), scenario.reference_curve)
    return EgoState(ego.x, ego.y, ego.heading, s, d, ego.v, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class PreviousCycle:
    """What the next cycle needs from the executed one."""

    decisions: dict
    warm: WarmStart
    description: SemanticDescription


@dataclass(frozen=True)
class StepResult:
    trajectory: PlannedTrajectory
    score: CandidateScore
    envelopes: tuple
    diagnostics: dict


def _plan_candidates(
    maneuvers, ego_long, ego_lat, curve, predictions, config, t0, warm_for, parallel
):
    def plan_one(env: ManeuverEnvelope):
        try:
            traj = plan_maneuver(
                env,
                ego_long,
                ego_lat,
                curve,
                predictions,
                config.planner,
                t0=t0,
                warm_start=warm_for(env),
            )
            return traj, None
        except InfeasiblePlan as exc:
            return None, exc.stage
        except SolverFailure as exc:
            return None, f"solver_{exc.stage}"

    if parallel and len(maneuvers) > 1:
        with ThreadPoolExecutor(max_workers=min(8, len(maneuvers))) as pool:
            results = list(pool.map(plan_one, maneuvers))
    else:
        results = [plan_one(env) for env in maneuvers]
    return results


def mpc_step(
    scenario: Scenario,
    ego: EgoState,
    t0: float,
    config: SimConfig,
    previous: Optional[PreviousCycle] = None,
) -> StepResult:
    """One full planning cycle: predict, classify, enumerate, merge, plan
    every valid maneuver, and select.

    The previously chosen maneuver, when it reappears, is warm-started with
    the time-shifted previous solution.  Raises NoFeasibleCandidate when no
    maneuver survives planning.
    """
    curve = scenario.reference_curve
    predictions = predict_obstacles(
        scenario, t0, config.prediction_steps, config.prediction_dt
    )
    maneuvers = build_maneuver_envelopes(
        predictions, curve, config.envelope, ego.s, scenario.lane_width
    )
    n_sequences = _count_sequences(predictions, curve, config, ego.s, scenario)

    ego_long = LongitudinalState(ego.s, ego.v, ego.a, ego.j)
    ego_lat = LateralState(
        d=ego.d,
        theta=ego.heading,
        kappa=ego.kappa,
        theta_r=curve.heading_at(ego.s),
        kappa_r=curve.curvature_at(ego.s),
    )

    def warm_for(env: ManeuverEnvelope) -> Optional[WarmStart]:
        if previous is not None and env.sequence.decisions == previous.decisions:
            return previous.warm
        return None

    results = _plan_candidates(
        maneuvers,
        ego_long,
        ego_lat,
        curve,
        predictions,
        config,
        t0,
        warm_for,
        config.parallel,
    )

    candidates = []
    failures = []
    for env, (traj, stage) in zip(maneuvers, results):
        if traj is not None:
            candidates.append((traj, env))
        else:
            failures.append((env.sequence.index, stage))

    diagnostics = {
        "enumerated": n_sequences,
        "valid_envelopes": len(maneuvers),
        "feasible": len(candidates),
        "failures": tuple(failures),
    }
    if not candidates:
        raise NoFeasibleCandidate(diagnostics)

    prev_description = previous.description if previous is not None else None
    trajectory, score = select_trajectory(
        candidates,
        prev_description,
        config.reasoning,
        curve=curve,
        scene=predictions,
        simultaneity=config.simultaneity_threshold,
    )
    return StepResult(trajectory, score, tuple(maneuvers), diagnostics)


def _count_sequences(predictions, curve, config, ego_s, scenario) -> int:
    """Pre-pruning sequence count (product of per-obstacle option counts)."""
    from .envelopes import classify_obstacle, decision_options, lane_polygon

    if not predictions:
        return 1
    horizon = float(predictions[0].prediction_times[-1])
    road_end = config.envelope.road_end(ego_s, horizon, curve.total_length)
    lane = lane_polygon(
        curve, scenario.lane_width, max(ego_s - 10.0, 0.0), road_end
    )
    count = 1
    for pred in predictions:
        count *= len(decision_options(classify_obstacle(pred, curve, lane)))
    return count


@dataclass(frozen=True)
class CycleRecord:
    time: float
    ego: EgoState
    maneuver_index: int
    decisions: dict
    semantics: str
    j_traj: float
    j_cons: float
    j_total: float
    enumerated: int
    valid_envelopes: int
    feasible: int
    failures: tuple
    solver_iterations: int
    envelopes: tuple
    fallback: bool = False


@dataclass
class SimulationTrace:
    records: list
    fallback_engaged: bool = False

    @property
    def decision_switches(self) -> int:
        labels = [
            tuple(sorted(r.decisions.items())) for r in self.records if not r.fallback
        ]
        return sum(1 for a, b in zip(labels, labels[1:]) if a != b)


def _advance_ego(trajectory: PlannedTrajectory, steps: int) -> EgoState:
    lon = trajectory.longitudinal[steps]
    lat = trajectory.lateral[steps]
    x, y, heading = trajectory.cartesian[steps]
    return EgoState(
        x=float(x),
        y=float(y),
        heading=float(heading),
        s=lon.s,
        v=lon.v,
        a=lon.a,
        j=lon.j,
        d=lat.d,
        kappa=lat.kappa,
    )


def run_simulation(scenario: Scenario, config: Optional[SimConfig] = None) -> SimulationTrace:
    """Run the receding-horizon loop over the scenario duration.

    The ego executes the first replanning period of each chosen trajectory
    (perfect tracking); obstacles move by ground truth.  When no candidate
    survives, a maximum-deceleration straight-line fallback is logged and
    the simulation stops.
    """
    config = config or SimConfig()
    config = replace(config, planner=replace(config.planner, v_ref=scenario.v_ref))
    ratio = scenario.replan_period / config.planner.dt
    exec_steps = int(round(ratio))
    if abs(ratio - exec_steps) > 1e-9 or exec_steps < 1:
        raise ValueError("replan_period must be a positive multiple of the planning dt")

    n_cycles = int(round(scenario.sim_duration / scenario.replan_period))
    ego = initial_ego_state(scenario)
    previous: Optional[PreviousCycle] = None
    records = []
    fallback = False

    for cycle in range(n_cycles):
        t0 = cycle * scenario.replan_period
        try:
            result = mpc_step(scenario, ego, t0, config, previous)
        except NoFeasibleCandidate as exc:
            records.append(_fallback_record(t0, ego, exc.args[0] if exc.args else {}))
            fallback = True
            break
        trajectory = result.trajectory
        records.append(
            CycleRecord(
                time=t0,
                ego=ego,
                maneuver_index=trajectory.maneuver.index,
                decisions={k: v.value for k, v in trajectory.maneuver.items},
                semantics=result.score.description.text(),
                j_traj=result.score.j_traj,
                j_cons=result.score.j_cons,
                j_total=result.score.j_total,
                enumerated=result.diagnostics["enumerated"],
                valid_envelopes=result.diagnostics["valid_envelopes"],
                feasible=result.diagnostics["feasible"],
                failures=result.diagnostics["failures"],
                solver_iterations=trajectory.solver_iterations,
                envelopes=result.envelopes,
            )
        )
        previous = PreviousCycle(
            decisions=trajectory.maneuver.decisions,
            warm=shift_warm_start(
                trajectory.u_longitudinal, trajectory.u_lateral, exec_steps
            ),
            description=result.score.description,
        )
        ego = _advance_ego(trajectory, exec_steps)

    return SimulationTrace(records, fallback)


def _fallback_record(t0: float, ego: EgoState, diagnostics: dict) -> CycleRecord:
    return CycleRecord(
        time=t0,
        ego=ego,
        maneuver_index=-1,
        decisions={},
        semantics="(fallback: maximum deceleration)",
        j_traj=float("nan"),
        j_cons=float("nan"),
        j_total=float("nan"),
        enumerated=diagnostics.get("enumerated", 0),
        valid_envelopes=diagnostics.get("valid_envelopes", 0),
        feasible=0,
        failures=diagnostics.get("failures", ()),
        solver_iterations=0,
        envelopes=(),
        fallback=True,
    )
