"""Scenario files: a reference curve, the ego start, and constant-velocity
obstacles, in SI units with angles in radians.

See docs/scenario_format.md for the schema.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .envelopes import ObstaclePrediction
from .geometry import Polygon, ReferenceCurve


class ScenarioError(ValueError):
    """Scenario file is missing fields or violates its invariants."""


@dataclass(frozen=True)
class EgoStart:
    x: float
    y: float
    heading: float
    v: float


@dataclass(frozen=True)
class ScenarioObstacle:
    id: str
    footprint: Polygon
    velocity: np.ndarray

    def footprint_at(self, t: float) -> Polygon:
        """Ground-truth footprint after constant-velocity motion for t."""
        return self.footprint.translated(self.velocity * t)


@dataclass(frozen=True)
class Scenario:
    reference_curve: ReferenceCurve
    lane_width: float
    ego_initial: EgoStart
    v_ref: float
    obstacles: tuple
    sim_duration: float
    replan_period: float


def load_scenario(path) -> Scenario:
    """Load and validate a YAML scenario file."""
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ScenarioError(f"cannot parse scenario file: {exc}") from exc
    if not isinstance(raw, dict):
        raise ScenarioError("scenario file must contain a mapping")
    try:
        curve = ReferenceCurve.from_waypoints(raw["reference_curve"]["waypoints"])
        ego_raw = raw["ego_initial"]
        ego = EgoStart(
            float(ego_raw["x"]),
            float(ego_raw["y"]),
            float(ego_raw["heading"]),
            float(ego_raw["v"]),
        )
        obstacles = tuple(
            ScenarioObstacle(
                id=str(ob["id"]),
                footprint=Polygon.from_vertices(ob["footprint"]),
                velocity=np.asarray(ob["velocity"], dtype=float),
            )
            for ob in raw.get("obstacles", [])
        )
        scenario = Scenario(
            reference_curve=curve,
            lane_width=float(raw["lane_width"]),
            ego_initial=ego,
            v_ref=float(raw["v_ref"]),
            obstacles=obstacles,
            sim_duration=float(raw["sim_duration"]),
            replan_period=float(raw["replan_period"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"invalid scenario file: {exc}") from exc
    if scenario.sim_duration <= 0.0:
        raise ScenarioError("sim_duration must be positive")
    if scenario.replan_period <= 0.0:
        raise ScenarioError("replan_period must be positive")
    if scenario.lane_width <= 0.0:
        raise ScenarioError("lane_width must be positive")
    ids = [ob.id for ob in scenario.obstacles]
    if len(set(ids)) != len(ids):
        raise ScenarioError("obstacle ids must be unique")
    return scenario


def predict_obstacles(
    scenario: Scenario,
    t0: float,
    steps: int = 10,
    dt: float = 0.4,
) -> list:
    """Constant-velocity footprint extrapolation from the state at t0.

    Prediction times are relative to t0 and start one step ahead.
    """
    if not 0.0 <= t0 <= scenario.sim_duration + 1e-9:
        raise ScenarioError(f"t0={t0} outside the simulation duration")
    times = dt * np.arange(1, steps + 1)
    predictions = []
    for ob in scenario.obstacles:
        footprints = tuple(ob.footprint_at(t0 + t) for t in times)
        predictions.append(ObstaclePrediction(ob.id, footprints, times))
    return predictions
