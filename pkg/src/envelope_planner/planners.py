"""Longitudinal and lateral trajectory planners operating per maneuver
envelope.

The longitudinal model chains position, velocity, acceleration, and jerk
with the jerk rate as input; velocity appears in the output so backward
motion can be prohibited.  The lateral model tracks lateral offset, vehicle
heading, path curvature, and the reference heading/curvature, with the
curvature rate as input; three body points spaced along the vehicle length
are constrained by the lateral corridor.  Both problems are condensed with
the batch maps and solved as dense QPs; the planners run
longitudinal-then-lateral per maneuver, followed by a Cartesian collision
check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import ltv_ocp, qp
from .envelopes import ManeuverEnvelope, ManeuverSequence
from .geometry import (
    FrenetPose,
    Polygon,
    ReferenceCurve,
    frenet_to_cartesian,
    polygon_intersects,
    rectangle,
)


class InfeasiblePlan(Exception):
    """A maneuver cannot be planned; ``stage`` is 'longitudinal', 'lateral',
    or 'collision'."""

    def __init__(self, stage: str, detail: str = ""):
        super().__init__(f"{stage}: {detail}" if detail else stage)
        self.stage = stage
        self.detail = detail


class SolverFailure(Exception):
    """The QP solver hit its iteration limit without an acceptable result."""

    def __init__(self, stage: str, residual: float):
        super().__init__(f"{stage}: solver stalled (kkt residual {residual:.2e})")
        self.stage = stage
        self.residual = residual


class SOutOfEnvelope(ValueError):
    """Longitudinal position left the spatial range of the envelope."""


@dataclass(frozen=True)
class LongitudinalState:
    s: float
    v: float
    a: float
    j: float


@dataclass(frozen=True)
class LateralState:
    d: float
    theta: float
    kappa: float
    theta_r: float
    kappa_r: float


@dataclass(frozen=True)
class PlannerConfig:
    """Horizon, weights, and bounds for both trajectory optimizations."""

    horizon: int = 20
    dt: float = 0.2
    weight_s: float = 0.0
    weight_v: float = 1e3
    weight_a: float = 10.0
    weight_j: float = 1e2
    weight_j_rate: float = 1e3
    weight_d: float = 1e2
    weight_theta: float = 10.0
    weight_kappa: float = 10.0
    weight_kappa_rate: float = 1e3
    v_ref: float = 8.0
    v_min: float = 0.0
    v_max: float = 13.9
    accel_min: float = -4.0
    accel_max: float = 2.5
    jerk_rate_bound: float = 50.0
    kappa_bound: float = 0.2
    kappa_rate_bound: float = 0.2
    slack_weight: float = 1e5
    slack_steps: int = 3
    vehicle_length: float = 4.0
    vehicle_width: float = 1.8
    v_lateral_floor: float = 0.1
    # The envelope margins already buffer the body; the Cartesian check
    # guards against transform errors, so it uses the true footprint.
    collision_margin: float = 0.0


@dataclass(frozen=True)
class LongitudinalPlan:
    states: tuple
    inputs: np.ndarray
    iterations: int

    @property
    def s(self) -> np.ndarray:
        return np.array([st.s for st in self.states])

    @property
    def v(self) -> np.ndarray:
        return np.array([st.v for st in self.states])


@dataclass(frozen=True)
class LateralPlan:
    states: tuple
    outputs: np.ndarray
    inputs: np.ndarray
    slack: np.ndarray
    d_bounds: np.ndarray
    iterations: int


@dataclass(frozen=True)
class PlannedTrajectory:
    """Planned states over the horizon plus the data the selector needs."""

    times: np.ndarray
    longitudinal: tuple
    lateral: tuple
    outputs_lateral: np.ndarray
    cartesian: np.ndarray
    maneuver: ManeuverSequence
    u_longitudinal: np.ndarray
    u_lateral: np.ndarray
    slack: np.ndarray
    d_bounds: np.ndarray
    solver_iterations: int


def _prediction_step(envelope: ManeuverEnvelope, t: float) -> int:
    """Zero-order-hold bucket, rounded to the prediction step at or after t.

    Rounding forward keeps constraints conservative for obstacles moving
    into the corridor (the footprint never lags the planning time).
    """
    times = envelope.prediction_times
    idx = int(np.searchsorted(times, t - 1e-9, side="left"))
    return min(max(idx, 0), len(times) - 1)


def longitudinal_model(config: PlannerConfig) -> ltv_ocp.LtvModel:
    n = config.horizon
    a = np.zeros((4, 4))
    a[0, 1] = a[1, 2] = a[2, 3] = 1.0
    b = np.zeros((4, 1))
    b[3, 0] = 1.0
    c = np.zeros((3, 4))
    c[0, 0] = c[1, 1] = c[2, 2] = 1.0
    return ltv_ocp.LtvModel(
        a=np.repeat(a[None], n, axis=0),
        b=np.repeat(b[None], n, axis=0),
        c=np.repeat(c[None], n, axis=0),
    )


def lateral_model(v_path: np.ndarray, length: float) -> ltv_ocp.LtvModel:
    """Time-variant lateral model built from the planned speed profile.

    ``v_path`` holds v at steps 0..N; propagation matrices use v_k for
    k = 0..N-1 while the output maps use v_k for k = 1..N.
    """
    v = np.asarray(v_path, dtype=float)
    n = len(v) - 1
    a = np.zeros((n, 5, 5))
    a[:, 0, 1] = v[:-1]
    a[:, 0, 3] = -v[:-1]
    a[:, 1, 2] = v[:-1]
    a[:, 3, 4] = v[:-1]
    b = np.zeros((n, 5, 1))
    b[:, 2, 0] = 1.0
    e = np.zeros((n, 5, 1))
    e[:, 4, 0] = 1.0
    c = np.zeros((n, 4, 5))
    c[:, 0, 0] = 1.0
    c[:, 1, 0] = 1.0
    c[:, 1, 1] = 0.5 * length
    c[:, 1, 3] = -0.5 * length
    c[:, 2, 0] = 1.0
    c[:, 2, 1] = length
    c[:, 2, 3] = -length
    c[:, 3, 2] = 1.0
    c[:, 3, 4] = v[1:]
    return ltv_ocp.LtvModel(a=a, b=b, c=c, e=e)


def _solve_stage(assembled: ltv_ocp.AssembledQp, warm, stage: str):
    if warm is not None:
        assembled.qp.warm_start = np.asarray(warm, dtype=float)
    solution = qp.solve(assembled.qp)
    if solution.status == "infeasible":
        raise InfeasiblePlan(stage, "optimization infeasible")
    if solution.status != "optimal":
        raise SolverFailure(stage, solution.kkt_residual)
    return solution


def plan_longitudinal(
    envelope: ManeuverEnvelope,
    x0: LongitudinalState,
    config: PlannerConfig,
    warm_start: Optional[np.ndarray] = None,
) -> LongitudinalPlan:
    """Plan s, v, a, j over the horizon inside the envelope's s-bounds.

    The reference tracks the target speed (the position component carries
    zero weight); outputs s, v, a are boxed per step with the envelope's
    longitudinal bounds, the speed floor prohibiting backward motion, and
    the acceleration comfort limits.
    """
    n, dt = config.horizon, config.dt
    model = longitudinal_model(config)
    batch = ltv_ocp.build_batch(ltv_ocp.discretize(model, dt))

    steps = np.arange(1, n + 1)
    y_max = np.zeros((n, 3))
    y_min = np.zeros((n, 3))
    for k in steps:
        env = envelope.per_step[_prediction_step(envelope, k * dt)]
        y_max[k - 1] = (env.s_max, config.v_max, config.accel_max)
        y_min[k - 1] = (env.s_min, config.v_min, config.accel_min)
    if np.any(y_max[:, 0] < y_min[:, 0]):
        raise InfeasiblePlan("longitudinal", "empty longitudinal corridor")

    q = np.diag([config.weight_s, config.weight_v, config.weight_a, config.weight_j])
    x_ref = np.column_stack(
        [
            x0.s + config.v_ref * dt * steps,
            np.full(n, config.v_ref),
            np.zeros(n),
            np.zeros(n),
        ]
    ).ravel()
    weights = ltv_ocp.CostWeights(
        q_per_step=np.repeat(q[None], n, axis=0),
        r_per_step=np.full((n, 1, 1), config.weight_j_rate),
        x_ref=x_ref,
    )
    bound = config.jerk_rate_bound
    assembled = ltv_ocp.assemble_qp(
        batch,
        weights,
        np.array([x0.s, x0.v, x0.a, x0.j]),
        u_min=np.full((n, 1), -bound),
        u_max=np.full((n, 1), bound),
        y_min=y_min,
        y_max=y_max,
    )
    solution = _solve_stage(assembled, warm_start, "longitudinal")
    u, _ = assembled.split(solution.primal)
    x_stack = batch.propagate(
        np.array([x0.s, x0.v, x0.a, x0.j]), u.ravel()
    ).reshape(n, 4)
    states = (x0,) + tuple(LongitudinalState(*row) for row in x_stack)
    return LongitudinalPlan(states, u.ravel(), solution.iterations)


def transform_lateral_constraints(
    s_of_t: np.ndarray, envelope: ManeuverEnvelope, config: PlannerConfig
) -> np.ndarray:
    """Spatial corridor bounds evaluated along the longitudinal solution.

    For each planning step the prediction-step envelope is selected by time,
    then d_left/d_right are taken conservatively (min of the upper, max of
    the lower bound) over the spatial samples spanned by the vehicle length
    centered at s(t), interpolating at the window ends.  Returns an (N, 2)
    array of (d_min, d_max) for steps 1..N.
    """
    s_path = np.asarray(s_of_t, dtype=float)
    if np.any(np.diff(s_path) < -1e-6):
        raise ValueError("s_of_t must be nondecreasing")
    n = len(s_path) - 1
    dt = config.dt
    half = 0.5 * config.vehicle_length
    bounds = np.zeros((n, 2))
    for k in range(1, n + 1):
        env = envelope.per_step[_prediction_step(envelope, k * dt)]
        grid = env.sample_points
        if s_path[k] > grid[-1] + 1e-6:
            raise SOutOfEnvelope(
                f"s={s_path[k]:.2f} beyond envelope range {grid[-1]:.2f}"
            )
        lo = max(s_path[k] - half, float(grid[0]))
        hi = min(s_path[k] + half, float(grid[-1]))
        i0 = int(np.searchsorted(grid, lo, side="left"))
        i1 = int(np.searchsorted(grid, hi, side="right")) - 1
        left_candidates = [np.interp(lo, grid, env.d_left), np.interp(hi, grid, env.d_left)]
        right_candidates = [np.interp(lo, grid, env.d_right), np.interp(hi, grid, env.d_right)]
        if i0 <= i1:
            left_candidates.append(env.d_left[i0 : i1 + 1].min())
            right_candidates.append(env.d_right[i0 : i1 + 1].max())
        bounds[k - 1] = (max(right_candidates), min(left_candidates))
    return bounds


def plan_lateral(
    envelope: ManeuverEnvelope,
    s_of_t: np.ndarray,
    v_of_t: np.ndarray,
    x0: LateralState,
    config: PlannerConfig,
    curve: ReferenceCurve,
    warm_start: Optional[np.ndarray] = None,
) -> LateralPlan:
    """Plan the lateral motion along a fixed longitudinal solution.

    The three body points share the corridor bounds; curvature is boxed
    separately.  Constraints on the body points are softened by nonnegative
    slack variables at the first few support points only, absorbing model
    error near obstacles under receding-horizon replanning.
    """
    n, dt = config.horizon, config.dt
    s_path = np.asarray(s_of_t, dtype=float)
    v_path = np.clip(np.asarray(v_of_t, dtype=float), config.v_lateral_floor, None)
    model = lateral_model(v_path, config.vehicle_length)
    batch = ltv_ocp.build_batch(ltv_ocp.discretize(model, dt))

    # Reference-curvature rate drives the heading/curvature reference states.
    kappa_r_path = np.array(
        [curve.curvature_at(min(s, curve.total_length)) for s in s_path]
    )
    z_stack = np.diff(kappa_r_path) / dt

    d_bounds = transform_lateral_constraints(s_path, envelope, config)
    if np.any(d_bounds[:, 0] > d_bounds[:, 1] + 1e-12):
        raise InfeasiblePlan("lateral", "corridor vanished under body-length widening")

    y_max = np.column_stack(
        [d_bounds[:, 1], d_bounds[:, 1], d_bounds[:, 1], np.full(n, config.kappa_bound)]
    )
    y_min = np.column_stack(
        [d_bounds[:, 0], d_bounds[:, 0], d_bounds[:, 0], np.full(n, -config.kappa_bound)]
    )

    w = config.weight_theta
    q = np.array(
        [
            [config.weight_d, 0.0, 0.0, 0.0, 0.0],
            [0.0, w, 0.0, -w, 0.0],
            [0.0, 0.0, config.weight_kappa, 0.0, 0.0],
            [0.0, -w, 0.0, w, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0],
        ]
    )
    weights = ltv_ocp.CostWeights(
        q_per_step=np.repeat(q[None], n, axis=0),
        r_per_step=np.full((n, 1, 1), config.weight_kappa_rate),
        x_ref=np.zeros(n * 5),
    )
    slack_entries = tuple(
        (step, out)
        for step in range(1, min(config.slack_steps, n) + 1)
        for out in range(3)
    )
    slack = ltv_ocp.SlackSpec(slack_entries, config.slack_weight)
    bound = config.kappa_rate_bound
    x0_vec = np.array([x0.d, x0.theta, x0.kappa, x0.theta_r, x0.kappa_r])
    assembled = ltv_ocp.assemble_qp(
        batch,
        weights,
        x0_vec,
        z_stack=z_stack,
        u_min=np.full((n, 1), -bound),
        u_max=np.full((n, 1), bound),
        y_min=y_min,
        y_max=y_max,
        slack=slack,
    )
    warm = None
    if warm_start is not None:
        warm = np.zeros(assembled.n_inputs + assembled.n_slack)
        warm[: min(len(warm_start), assembled.n_inputs)] = warm_start[
            : assembled.n_inputs
        ]
    solution = _solve_stage(assembled, warm, "lateral")
    u, eps = assembled.split(solution.primal)
    x_stack = batch.propagate(x0_vec, u.ravel(), z_stack).reshape(n, 5)
    outputs = (batch.cal_c @ batch.propagate(x0_vec, u.ravel(), z_stack)).reshape(n, 4)
    states = (x0,) + tuple(LateralState(*row) for row in x_stack)
    return LateralPlan(states, outputs, u.ravel(), eps, d_bounds, solution.iterations)


@dataclass(frozen=True)
class WarmStart:
    """Time-shifted input sequences from the previously executed maneuver."""

    u_longitudinal: np.ndarray
    u_lateral: np.ndarray


def shift_warm_start(
    u_longitudinal: np.ndarray, u_lateral: np.ndarray, steps: int
) -> WarmStart:
    """Advance input sequences by ``steps``, repeating the final input."""

    def shift(u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if steps <= 0 or len(u) == 0:
            return u.copy()
        return np.concatenate([u[steps:], np.repeat(u[-1:], min(steps, len(u)))])

    return WarmStart(shift(u_longitudinal), shift(u_lateral))


def ego_footprint(pose_xy, heading: float, config: PlannerConfig) -> Polygon:
    """Vehicle rectangle centered on the planning reference point."""
    return rectangle(
        np.asarray(pose_xy, dtype=float),
        config.vehicle_length + 2.0 * config.collision_margin,
        config.vehicle_width + 2.0 * config.collision_margin,
        heading,
    )


def plan_maneuver(
    envelope: ManeuverEnvelope,
    ego_longitudinal: LongitudinalState,
    ego_lateral: LateralState,
    curve: ReferenceCurve,
    scene: list,
    config: PlannerConfig,
    t0: float = 0.0,
    warm_start: Optional[WarmStart] = None,
) -> PlannedTrajectory:
    """Sequential longitudinal-then-lateral solve plus a Cartesian
    collision check against the predicted footprints.

    Raises InfeasiblePlan tagged with the failing stage ('longitudinal',
    'lateral', or 'collision')."""
    n, dt = config.horizon, config.dt
    longitudinal = plan_longitudinal(
        envelope,
        ego_longitudinal,
        config,
        None if warm_start is None else warm_start.u_longitudinal,
    )
    s_path = longitudinal.s
    v_path = longitudinal.v
    lateral = plan_lateral(
        envelope,
        s_path,
        v_path,
        ego_lateral,
        config,
        curve,
        None if warm_start is None else warm_start.u_lateral,
    )

    cartesian = np.zeros((n + 1, 3))
    for k in range(n + 1):
        pose = FrenetPose(
            s=min(s_path[k], curve.total_length),
            d=lateral.states[k].d,
            theta=lateral.states[k].theta,
            kappa=lateral.states[k].kappa,
        )
        cartesian[k] = frenet_to_cartesian(pose, curve)

    for k in range(1, n + 1):
        ego_poly = ego_footprint(cartesian[k, :2], cartesian[k, 2], config)
        for pred in scene:
            idx = _prediction_step(envelope, k * dt)
            idx = min(idx, len(pred.footprints) - 1)
            if polygon_intersects(ego_poly, pred.footprints[idx]):
                raise InfeasiblePlan(
                    "collision", f"step {k} intersects obstacle {pred.id}"
                )

    times = t0 + dt * np.arange(n + 1)
    return PlannedTrajectory(
        times=times,
        longitudinal=longitudinal.states,
        lateral=lateral.states,
        outputs_lateral=lateral.outputs,
        cartesian=cartesian,
        maneuver=envelope.sequence,
        u_longitudinal=longitudinal.inputs,
        u_lateral=lateral.inputs,
        slack=lateral.slack,
        d_bounds=lateral.d_bounds,
        solver_iterations=longitudinal.iterations + lateral.iterations,
    )
