"""Free space-time decision envelopes and combinatorial maneuver enumeration.

Each predicted obstacle is classified against the ego lane, assigned a set of
tactical decisions, and turned into per-prediction-step convex bounds
(s_min, s_max, d_left(s_i), d_right(s_i)) on a shared spatial sample grid.
Per-obstacle envelopes are merged per maneuver sequence by elementwise
min/max; sequences whose merged envelope has an empty feasible region at any
step are pruned.

Tactical left/right name the side of the ego path on which the obstacle
remains: keeping an obstacle *right* means the ego corridor lies above the
obstacle's left edge.  ``before``/``after`` are temporal: ``after`` keeps the
ego behind the blocked interval while the obstacle occupies the lane (pass
once it has left), ``before`` requires the ego to already be beyond it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .geometry import Polygon, ReferenceCurve, polygon_intersects, project_to_frenet


class EmptyPrediction(ValueError):
    """Obstacle prediction contains no footprints."""


class ObstacleKind(Enum):
    POINT_OVERLAPPING = "point_overlapping"
    LINE_OVERLAPPING = "line_overlapping"
    NON_OVERLAPPING = "non_overlapping"


class Decision(str, Enum):
    BEFORE = "before"
    AFTER = "after"
    RIGHT = "right"
    LEFT = "left"


# Options per obstacle class, in fixed column order.
_POINT_OPTIONS = (Decision.BEFORE, Decision.AFTER, Decision.RIGHT, Decision.LEFT)
_LINE_OPTIONS = (Decision.AFTER, Decision.RIGHT, Decision.LEFT)


@dataclass(frozen=True)
class ObstaclePrediction:
    """Predicted footprints of one obstacle at strictly increasing times."""

    id: str
    footprints: tuple
    prediction_times: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.prediction_times, dtype=float)
        if len(self.footprints) == 0:
            raise EmptyPrediction(f"obstacle {self.id} has no footprints")
        if len(self.footprints) != len(times):
            raise ValueError("footprints and prediction_times lengths differ")
        if np.any(np.diff(times) <= 0.0):
            raise ValueError("prediction_times must be strictly increasing")
        object.__setattr__(self, "prediction_times", times)


@dataclass(frozen=True)
class ObstacleClass:
    kind: ObstacleKind
    side_for_non_overlapping: Optional[str] = None

    def __post_init__(self):
        populated = self.side_for_non_overlapping is not None
        if populated != (self.kind is ObstacleKind.NON_OVERLAPPING):
            raise ValueError("side is populated iff kind is non_overlapping")


@dataclass(frozen=True)
class EnvelopeConfig:
    """Margins, sampling, and road-extent rules for envelope construction."""

    ego_half_width: float = 0.9
    lateral_margin: float = 0.2
    # Bounds apply to the vehicle center point, so the longitudinal margin
    # must cover the body half-length plus a safety gap.
    longitudinal_margin: float = 3.5
    sample_spacing: float = 1.0
    road_bound_left: float = 3.0
    road_bound_right: float = -1.75
    v_max: float = 13.9
    reach_margin: float = 50.0

    @property
    def lateral_inflation(self) -> float:
        return self.ego_half_width + self.lateral_margin

    def road_end(self, ego_s: float, horizon: float, curve_length: float) -> float:
        return min(curve_length, ego_s + self.v_max * horizon + self.reach_margin)

    def sample_grid(self, road_start: float, road_end: float) -> np.ndarray:
        n = max(int(np.floor((road_end - road_start) / self.sample_spacing)) + 1, 2)
        return road_start + self.sample_spacing * np.arange(n)


@dataclass(frozen=True)
class DecisionEnvelope:
    """Convex free-space bounds for one prediction step.

    The feasible region is s in [s_min, s_max] together with
    d_right(s_i) <= d <= d_left(s_i) at every spatial sample.
    """

    s_max: float
    s_min: float
    d_left: np.ndarray
    d_right: np.ndarray
    sample_points: np.ndarray

    @property
    def is_valid(self) -> bool:
        return self.s_min <= self.s_max and bool(
            np.all(self.d_right <= self.d_left)
        )

    @property
    def dimension(self) -> int:
        return 2 + 2 * len(self.sample_points)


@dataclass(frozen=True)
class ManeuverSequence:
    """One tactical decision per obstacle, keyed by obstacle id."""

    items: tuple
    index: int

    @property
    def decisions(self) -> dict:
        return dict(self.items)

    def label(self) -> str:
        return ",".join(f"{oid}:{dec.value}" for oid, dec in self.items)


@dataclass(frozen=True)
class ManeuverEnvelope:
    sequence: ManeuverSequence
    per_step: tuple
    prediction_times: np.ndarray


def lane_polygon(
    curve: ReferenceCurve, lane_width: float, s_start: float, s_end: float
) -> Polygon:
    """Strip of the ego lane (full lane width) between two arc lengths."""
    s_start = max(s_start, 0.0)
    s_end = min(s_end, curve.total_length)
    if s_end - s_start < 1e-6:
        raise ValueError("lane polygon needs a positive arc-length range")
    knots = curve.cumulative_arc_length
    interior = knots[(knots > s_start + 1e-9) & (knots < s_end - 1e-9)]
    stations = np.concatenate(([s_start], interior, [s_end]))
    half = 0.5 * lane_width
    left = [curve.offset_point(s, half) for s in stations]
    right = [curve.offset_point(s, -half) for s in stations]
    return Polygon.from_vertices(np.array(left + right[::-1]))


def classify_obstacle(
    pred: ObstaclePrediction, curve: ReferenceCurve, lane_poly: Polygon
) -> ObstacleClass:
    """Classify an obstacle by how its predicted motion meets the ego lane.

    Never touching the lane polygon is non-overlapping; a contiguous proper
    subset of overlap steps is point-overlapping (the obstacle enters and/or
    exits within the horizon); anything else, including persistent overlap,
    is line-overlapping.
    """
    if len(pred.footprints) == 0:
        raise EmptyPrediction(pred.id)
    overlap = np.array(
        [polygon_intersects(fp, lane_poly) for fp in pred.footprints], dtype=bool
    )
    if not overlap.any():
        mean_d = float(
            np.mean(
                [
                    project_to_frenet(fp.centroid, curve, corridor=np.inf)[1]
                    for fp in pred.footprints
                ]
            )
        )
        side = "left" if mean_d > 0.0 else "right"
        return ObstacleClass(ObstacleKind.NON_OVERLAPPING, side)
    if overlap.all():
        return ObstacleClass(ObstacleKind.LINE_OVERLAPPING)
    idx = np.flatnonzero(overlap)
    contiguous = bool(np.all(np.diff(idx) == 1))
    if contiguous:
        return ObstacleClass(ObstacleKind.POINT_OVERLAPPING)
    # Re-entering overlap is treated conservatively as persistent.
    return ObstacleClass(ObstacleKind.LINE_OVERLAPPING)


def decision_options(klass: ObstacleClass) -> tuple:
    """Tactical decisions available for an obstacle class, in fixed order."""
    if klass.kind is ObstacleKind.POINT_OVERLAPPING:
        return _POINT_OPTIONS
    if klass.kind is ObstacleKind.LINE_OVERLAPPING:
        return _LINE_OPTIONS
    side = klass.side_for_non_overlapping
    return (Decision.LEFT,) if side == "left" else (Decision.RIGHT,)


def enumerate_maneuvers(classes: dict) -> list:
    """Cartesian product of decision options over obstacles sorted by id."""
    ids = sorted(classes)
    option_lists = [decision_options(classes[oid]) for oid in ids]
    sequences = []
    for index, combo in enumerate(itertools.product(*option_lists)):
        sequences.append(ManeuverSequence(tuple(zip(ids, combo)), index))
    return sequences


def frenet_extent(polygon: Polygon, curve: ReferenceCurve):
    """(s_lo, s_hi, d_lo, d_hi) bounding box of the polygon in Frenet frame."""
    sd = np.array(
        [project_to_frenet(v, curve, corridor=np.inf) for v in polygon.vertices]
    )
    return (
        float(sd[:, 0].min()),
        float(sd[:, 0].max()),
        float(sd[:, 1].min()),
        float(sd[:, 1].max()),
    )


def _clip_to_band(points: np.ndarray, d_lo: float, d_hi: float) -> np.ndarray:
    """Sutherland-Hodgman clip of an (s, d) polygon to d in [d_lo, d_hi]."""
    for sign, bound in ((1.0, d_hi), (-1.0, d_lo)):
        if len(points) == 0:
            return points
        out = []
        n = len(points)
        for i in range(n):
            a, b = points[i], points[(i + 1) % n]
            fa = sign * (a[1] - bound)
            fb = sign * (b[1] - bound)
            if fa <= 0.0:
                out.append(a)
            if (fa < 0.0 < fb) or (fb < 0.0 < fa):
                out.append(a + (fa / (fa - fb)) * (b - a))
        points = np.asarray(out)
    return points


def lane_overlap_interval(
    polygon: Polygon, curve: ReferenceCurve, lane_width: float
):
    """Arc-length interval where the footprint blocks the ego lane, or None."""
    sd = np.array(
        [project_to_frenet(v, curve, corridor=np.inf) for v in polygon.vertices]
    )
    half = 0.5 * lane_width
    clipped = _clip_to_band(sd, -half, half)
    if len(clipped) == 0:
        return None
    return float(clipped[:, 0].min()), float(clipped[:, 0].max())


def build_decision_envelope(
    pred: ObstaclePrediction,
    decision: Decision,
    step: int,
    curve: ReferenceCurve,
    config: EnvelopeConfig,
    sample_points: np.ndarray,
    lane_width: float,
) -> DecisionEnvelope:
    """Bounds imposed by one obstacle under one decision at one step.

    All bounds are inflated so the planner can treat the ego as a point:
    lateral by ego half-width plus the lateral margin, longitudinal by the
    longitudinal margin.  The result may violate the envelope invariants
    (d_left < d_right); callers prune via ``is_valid`` or during merging.
    """
    if not 0 <= step < len(pred.footprints):
        raise IndexError(f"prediction step {step} out of range")
    grid = np.asarray(sample_points, dtype=float)
    road_start = float(grid[0])
    road_end = float(grid[-1])
    d_left = np.full(len(grid), config.road_bound_left)
    d_right = np.full(len(grid), config.road_bound_right)
    s_min, s_max = road_start, road_end

    footprint = pred.footprints[step]
    s_lo, s_hi, d_lo, d_hi = frenet_extent(footprint, curve)
    m_long = config.longitudinal_margin
    m_lat = config.lateral_inflation
    blocked = lane_overlap_interval(footprint, curve, lane_width)

    if decision is Decision.AFTER:
        if blocked is not None:
            s_max = min(s_max, blocked[0] - m_long)
    elif decision is Decision.BEFORE:
        if blocked is not None:
            s_min = max(s_min, blocked[1] + m_long)
    else:
        # Pad by one sample spacing so linear interpolation between samples
        # stays outside the inflated footprint.
        pad = m_long + config.sample_spacing
        span = (grid >= s_lo - pad) & (grid <= s_hi + pad)
        # Clips are capped at the road corridor: a lone obstacle pinned
        # against a road edge leaves a zero-width corridor at its samples
        # (handled locally by the planner) instead of invalidating every
        # step; only merged clips from opposing obstacles may cross.
        if decision is Decision.RIGHT:
            # Obstacle stays right of the ego corridor.
            raised = min(d_hi + m_lat, config.road_bound_left)
            d_right = np.where(span, np.maximum(d_right, raised), d_right)
        else:
            lowered = max(d_lo - m_lat, config.road_bound_right)
            d_left = np.where(span, np.minimum(d_left, lowered), d_left)

    return DecisionEnvelope(s_max, s_min, d_left, d_right, grid)


def road_envelope(config: EnvelopeConfig, sample_points: np.ndarray) -> DecisionEnvelope:
    """Unconstrained envelope spanning the whole planning road."""
    grid = np.asarray(sample_points, dtype=float)
    return DecisionEnvelope(
        s_max=float(grid[-1]),
        s_min=float(grid[0]),
        d_left=np.full(len(grid), config.road_bound_left),
        d_right=np.full(len(grid), config.road_bound_right),
        sample_points=grid,
    )


def merge_envelopes(
    sequence: ManeuverSequence, per_obstacle: list
) -> Optional[DecisionEnvelope]:
    """Elementwise merge of per-obstacle envelopes for one prediction step.

    Upper bounds take the minimum, lower bounds the maximum.  Returns None
    when the merged bounds violate the envelope invariants (empty feasible
    region), which prunes the maneuver.
    """
    if not per_obstacle:
        raise ValueError("merge needs at least one envelope")
    grid = per_obstacle[0].sample_points
    for env in per_obstacle[1:]:
        if len(env.sample_points) != len(grid) or not np.array_equal(
            env.sample_points, grid
        ):
            raise ValueError("envelopes must share the same sample grid")
    merged = DecisionEnvelope(
        s_max=min(env.s_max for env in per_obstacle),
        s_min=max(env.s_min for env in per_obstacle),
        d_left=np.minimum.reduce([env.d_left for env in per_obstacle]),
        d_right=np.maximum.reduce([env.d_right for env in per_obstacle]),
        sample_points=grid,
    )
    return merged if merged.is_valid else None


def build_maneuver_envelopes(
    scene: list,
    curve: ReferenceCurve,
    config: EnvelopeConfig,
    ego_s: float,
    lane_width: float,
) -> list:
    """Enumerate decision sequences and merge per-step envelopes.

    Sequences with an invalid merged envelope at any prediction step are
    dropped; survivors keep enumeration order.  An empty scene yields one
    maneuver with unconstrained road envelopes at every step.
    """
    if scene:
        horizon = max(float(p.prediction_times[-1]) for p in scene)
        times = scene[0].prediction_times
    else:
        horizon = 0.0
        times = np.array([0.0])
    road_start = ego_s
    road_end = config.road_end(ego_s, horizon, curve.total_length)
    grid = config.sample_grid(road_start, road_end)

    if not scene:
        base = road_envelope(config, grid)
        seq = ManeuverSequence((), 0)
        return [ManeuverEnvelope(seq, (base,), times)]

    lane_poly = lane_polygon(
        curve, lane_width, max(road_start - 10.0, 0.0), road_end
    )
    by_id = {p.id: p for p in scene}
    classes = {p.id: classify_obstacle(p, curve, lane_poly) for p in scene}
    sequences = enumerate_maneuvers(classes)
    n_steps = len(times)

    cache: dict = {}

    def envelope_for(oid: str, decision: Decision, step: int) -> DecisionEnvelope:
        key = (oid, decision, step)
        if key not in cache:
            cache[key] = build_decision_envelope(
                by_id[oid], decision, step, curve, config, grid, lane_width
            )
        return cache[key]

    survivors = []
    for seq in sequences:
        per_step = []
        for step in range(n_steps):
            merged = merge_envelopes(
                seq,
                [envelope_for(oid, dec, step) for oid, dec in seq.items],
            )
            if merged is None:
                per_step = None
                break
            per_step.append(merged)
        if per_step is not None:
            survivors.append(ManeuverEnvelope(seq, tuple(per_step), times))
    return survivors
