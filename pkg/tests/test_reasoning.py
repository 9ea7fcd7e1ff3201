"""Reasoning tests: semantic extraction, trajectory cost recomputation,
consistency cost against a brute-force subsequence oracle, and selection."""

import itertools

import numpy as np
import pytest

from envelope_planner.envelopes import (
    ManeuverSequence,
    ObstaclePrediction,
)
from envelope_planner.geometry import ReferenceCurve, rectangle
from envelope_planner.planners import (
    LateralState,
    LongitudinalState,
    PlannedTrajectory,
)
from envelope_planner.reasoning import (
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

PRED_TIMES = 0.4 * np.arange(1, 11)


def straight_curve():
    return ReferenceCurve.from_waypoints([[0.0, 0.0], [300.0, 0.0]])


def make_trajectory(
    s_path,
    d_path=None,
    accel=None,
    jerk=None,
    kappa_rate=None,
    d_bounds=None,
    index=0,
):
    n = len(s_path) - 1
    d_path = np.zeros(n + 1) if d_path is None else np.asarray(d_path, float)
    accel = np.zeros(n + 1) if accel is None else np.asarray(accel, float)
    jerk = np.zeros(n + 1) if jerk is None else np.asarray(jerk, float)
    kappa_rate = np.zeros(n) if kappa_rate is None else np.asarray(kappa_rate, float)
    if d_bounds is None:
        d_bounds = np.column_stack([d_path[1:] - 1.0, d_path[1:] + 1.0])
    longitudinal = tuple(
        LongitudinalState(s_path[k], 8.0, accel[k], jerk[k]) for k in range(n + 1)
    )
    lateral = tuple(
        LateralState(d_path[k], 0.0, 0.0, 0.0, 0.0) for k in range(n + 1)
    )
    cartesian = np.column_stack([s_path, d_path, np.zeros(n + 1)])
    return PlannedTrajectory(
        times=0.2 * np.arange(n + 1),
        longitudinal=longitudinal,
        lateral=lateral,
        outputs_lateral=np.zeros((n, 4)),
        cartesian=cartesian,
        maneuver=ManeuverSequence((), index),
        u_longitudinal=np.zeros(n),
        u_lateral=kappa_rate,
        slack=np.zeros(0),
        d_bounds=d_bounds,
        solver_iterations=0,
    )


def static_prediction(name, center, length=4.5, width=1.8):
    footprint = rectangle(center, length, width)
    return ObstaclePrediction(
        name, tuple(footprint for _ in PRED_TIMES), PRED_TIMES
    )


def test_parked_car_passed_on_its_left():
    curve = straight_curve()
    scene = [static_prediction("O2", (20.0, -1.0))]
    s_path = np.linspace(0.0, 40.0, 21)
    d_path = np.full(21, 1.5)
    traj = make_trajectory(s_path, d_path)
    description = extract_semantics(traj, scene, curve)
    assert description.text() == "O2 is passed left"
    assert description.atoms[0].side == "left"


def test_obstacle_beyond_horizon_produces_no_atom():
    curve = straight_curve()
    scene = [static_prediction("FAR", (200.0, 0.0))]
    traj = make_trajectory(np.linspace(0.0, 40.0, 21))
    description = extract_semantics(traj, scene, curve)
    assert len(description) == 0
    assert description.text() == "(no passing)"


def test_obstacle_already_behind_produces_no_atom():
    curve = straight_curve()
    scene = [static_prediction("BACK", (5.0, 0.5))]
    traj = make_trajectory(np.linspace(50.0, 90.0, 21))
    description = extract_semantics(traj, scene, curve)
    assert len(description) == 0


def test_simultaneous_passes_joined_with_and():
    curve = straight_curve()
    scene = [
        static_prediction("A", (20.0, -2.0)),
        static_prediction("B", (20.4, 2.0)),
    ]
    traj = make_trajectory(np.linspace(0.0, 40.0, 21))
    description = extract_semantics(traj, scene, curve)
    assert len(description) == 2
    assert description.connectors == ("and",)
    assert " and " in description.text()


def test_sequential_passes_joined_with_then():
    curve = straight_curve()
    scene = [
        static_prediction("A", (10.0, -2.0)),
        static_prediction("B", (30.0, 2.0)),
    ]
    traj = make_trajectory(np.linspace(0.0, 40.0, 21))
    description = extract_semantics(traj, scene, curve)
    assert description.connectors == ("then",)
    assert description.keys == [("A", "left"), ("B", "right")]


def test_trajectory_cost_zero_for_centered_smooth_ride():
    s_path = np.linspace(0.0, 32.0, 21)
    d_bounds = np.tile([-1.0, 1.0], (20, 1))
    traj = make_trajectory(s_path, d_path=np.zeros(21), d_bounds=d_bounds)
    assert trajectory_cost(traj) == 0.0


def test_trajectory_cost_constant_acceleration():
    s_path = np.linspace(0.0, 32.0, 21)
    accel = np.ones(21)
    d_bounds = np.tile([-1.0, 1.0], (20, 1))
    traj = make_trajectory(s_path, accel=accel, d_bounds=d_bounds)
    assert trajectory_cost(traj) == pytest.approx(10.0)


def test_trajectory_cost_matches_independent_recomputation():
    rng = np.random.default_rng(0)
    weights = ReasoningWeights()
    for _ in range(50):
        n = 20
        s_path = np.cumsum(rng.uniform(0.5, 2.0, n + 1))
        d_path = rng.normal(size=n + 1)
        accel = rng.normal(size=n + 1)
        jerk = rng.normal(size=n + 1)
        kappa_rate = rng.normal(size=n)
        lo = rng.normal(size=n)
        d_bounds = np.column_stack([lo, lo + rng.uniform(0.5, 2.0, n)])
        traj = make_trajectory(s_path, d_path, accel, jerk, kappa_rate, d_bounds)
        total = 0.0
        for k in range(1, n + 1):
            d_ref = 0.5 * (d_bounds[k - 1, 0] + d_bounds[k - 1, 1])
            total += (
                weights.accel * accel[k] ** 2
                + weights.jerk * jerk[k] ** 2
                + weights.centering * (d_path[k] - d_ref) ** 2
                + weights.curvature_rate * kappa_rate[k - 1] ** 2
            )
        total /= n
        assert trajectory_cost(traj, weights) == pytest.approx(total, abs=1e-12)


def description_from_keys(keys):
    atoms = [
        PassingAtom(obstacle, side, float(i)) for i, (obstacle, side) in enumerate(keys)
    ]
    return SemanticDescription.from_atoms(atoms)


def brute_force_lcs(a, b):
    """Longest common subsequence by enumerating all subsequences of a."""
    best = 0
    for mask in range(1 << len(a)):
        sub = [a[i] for i in range(len(a)) if mask >> i & 1]
        it = iter(b)
        if all(item in it for item in sub):
            best = max(best, len(sub))
    return best


def test_consistency_identical_descriptions_cost_nothing():
    desc = description_from_keys([("O1", "left"), ("O2", "right"), ("O3", "left")])
    assert consistency_cost(desc, desc, 30.0) == 0.0


def test_consistency_disjoint_descriptions():
    previous = description_from_keys([("A", "left"), ("B", "left"), ("C", "left")])
    current = description_from_keys([("D", "right"), ("E", "right"), ("F", "right")])
    assert consistency_cost(current, previous, 30.0) == pytest.approx(90.0)


def test_consistency_single_flip():
    previous = description_from_keys(
        [("A", "left"), ("B", "right"), ("C", "left")]
    )
    current = description_from_keys([("A", "left"), ("B", "left"), ("C", "left")])
    assert consistency_cost(current, previous, 30.0) == pytest.approx(30.0)


def test_consistency_none_previous_is_free():
    current = description_from_keys([("A", "left")])
    assert consistency_cost(current, None, 30.0) == 0.0


def test_consistency_matches_brute_force_oracle():
    rng = np.random.default_rng(1)
    obstacles = ["O1", "O2", "O3", "O4"]
    sides = ["left", "right"]
    for _ in range(500):
        len_a = int(rng.integers(0, 7))
        len_b = int(rng.integers(0, 7))
        a = [
            (obstacles[rng.integers(0, 4)], sides[rng.integers(0, 2)])
            for _ in range(len_a)
        ]
        b = [
            (obstacles[rng.integers(0, 4)], sides[rng.integers(0, 2)])
            for _ in range(len_b)
        ]
        expected = 30.0 * (max(len_a, len_b) - brute_force_lcs(a, b))
        got = consistency_cost(
            description_from_keys(a), description_from_keys(b), 30.0
        )
        assert got == pytest.approx(expected)


def test_consistency_n_max_override():
    previous = description_from_keys([("A", "left")])
    current = description_from_keys([("A", "left"), ("B", "left")])
    assert consistency_cost(current, previous, 30.0) == pytest.approx(30.0)
    assert consistency_cost(current, previous, 30.0, n_max=1) == pytest.approx(0.0)


def test_selection_singleton():
    curve = straight_curve()
    traj = make_trajectory(np.linspace(0.0, 32.0, 21))
    chosen, score = select_trajectory([(traj, None)], None, curve=curve, scene=[])
    assert chosen is traj
    assert score.j_total == score.j_traj + score.j_cons


def test_selection_prefers_matching_previous_on_tie():
    curve = straight_curve()
    scene = [static_prediction("A", (20.0, -2.0))]
    s_path = np.linspace(0.0, 40.0, 21)
    left = make_trajectory(s_path, d_path=np.full(21, 0.5), index=1)
    right = make_trajectory(s_path, d_path=np.full(21, -4.5), index=0)
    # Equalize trajectory costs via matching bounds.
    left = left.__class__(**{**left.__dict__, "d_bounds": np.tile([0.0, 1.0], (20, 1))})
    right = right.__class__(**{**right.__dict__, "d_bounds": np.tile([-5.0, -4.0], (20, 1))})
    previous = extract_semantics(left, scene, curve)
    chosen, score = select_trajectory(
        [(right, None), (left, None)], previous, curve=curve, scene=scene
    )
    assert chosen is left
    assert score.j_cons == 0.0


def test_selection_tie_breaks_to_lowest_index():
    curve = straight_curve()
    a = make_trajectory(np.linspace(0.0, 32.0, 21), index=3)
    b = make_trajectory(np.linspace(0.0, 32.0, 21), index=1)
    chosen, _ = select_trajectory([(a, None), (b, None)], None, curve=curve, scene=[])
    assert chosen is b


def test_selection_scale_invariance():
    curve = straight_curve()
    scene = [static_prediction("A", (20.0, -2.0))]
    s_path = np.linspace(0.0, 40.0, 21)
    candidates = [
        (make_trajectory(s_path, d_path=np.full(21, 0.2), index=0), None),
        (make_trajectory(s_path, d_path=np.full(21, 0.7), index=1), None),
    ]
    previous = description_from_keys([("A", "right")])
    base_choice, base_score = select_trajectory(
        candidates, previous, ReasoningWeights(), curve=curve, scene=scene
    )
    for lam in (0.1, 3.0, 42.0):
        scaled = ReasoningWeights(
            accel=10.0 * lam,
            jerk=10.0 * lam,
            centering=1e2 * lam,
            curvature_rate=1e3 * lam,
            consistency=30.0 * lam,
        )
        choice, score = select_trajectory(
            candidates, previous, scaled, curve=curve, scene=scene
        )
        assert choice is base_choice
        assert score.j_total == pytest.approx(lam * base_score.j_total, rel=1e-9)


def test_selection_empty_raises():
    with pytest.raises(NoFeasibleCandidate):
        select_trajectory([], None)


def test_extraction_is_deterministic():
    curve = straight_curve()
    scene = [static_prediction("A", (20.0, -2.0)), static_prediction("B", (28.0, 2.0))]
    traj = make_trajectory(np.linspace(0.0, 40.0, 21))
    first = extract_semantics(traj, scene, curve)
    second = extract_semantics(traj, scene, curve)
    assert first.text() == second.text()
    assert first.keys == second.keys
