"""Combinatorial maneuver-envelope trajectory planner.

Enumerates convex maneuver envelopes around predicted obstacles, solves
decoupled longitudinal and lateral linear-quadratic trajectory
optimizations per envelope, and selects the executed trajectory by
trajectory cost plus semantic maneuver-consistency cost in a
receding-horizon loop.
"""

from .envelopes import (
    Decision,
    DecisionEnvelope,
    EnvelopeConfig,
    ManeuverEnvelope,
    ManeuverSequence,
    ObstacleClass,
    ObstacleKind,
    ObstaclePrediction,
    build_decision_envelope,
    build_maneuver_envelopes,
    classify_obstacle,
    decision_options,
    enumerate_maneuvers,
    merge_envelopes,
)
from .geometry import (
    FrenetPose,
    Polygon,
    ReferenceCurve,
    frenet_to_cartesian,
    polygon_intersects,
    project_to_frenet,
)
from .planners import (
    InfeasiblePlan,
    LateralState,
    LongitudinalState,
    PlannedTrajectory,
    PlannerConfig,
    plan_lateral,
    plan_longitudinal,
    plan_maneuver,
    transform_lateral_constraints,
)
from .qp import QpSettings, QpSolution, QuadraticProgram, solve
from .reasoning import (
    CandidateScore,
    NoFeasibleCandidate,
    PassingAtom,
    ReasoningWeights,
    SemanticDescription,
    consistency_cost,
    extract_semantics,
    select_trajectory,
    trajectory_cost,
)
from .scenario import Scenario, load_scenario, predict_obstacles
from .simulate import SimConfig, mpc_step, run_simulation

__version__ = "0.1.0"
