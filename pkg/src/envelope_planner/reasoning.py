"""Semantic maneuver descriptions, trajectory/consistency costs, and
trajectory selection.

A planned trajectory is mapped to an ordered list of passing atoms
"(obstacle, side) at time t" by intersecting the ego's longitudinal motion
with each obstacle's occupied arc-length interval over time; the signed
lateral distance at the intersection time gives the side.  Selection
minimizes the trajectory cost plus a consistency cost that penalizes
switching away from the previously described maneuver.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .envelopes import ObstaclePrediction, frenet_extent
from .geometry import ReferenceCurve
from .planners import PlannedTrajectory


class NoFeasibleCandidate(Exception):
    """Every maneuver failed planning; the caller falls back to stopping."""


@dataclass(frozen=True)
class ReasoningWeights:
    accel: float = 10.0
    jerk: float = 10.0
    centering: float = 1e2
    curvature_rate: float = 1e3
    consistency: float = 30.0


@dataclass(frozen=True)
class PassingAtom:
    obstacle: str
    side: str
    time: float

    @property
    def key(self):
        return (self.obstacle, self.side)

    def text(self) -> str:
        return f"{self.obstacle} is passed {self.side}"


@dataclass(frozen=True)
class SemanticDescription:
    """Time-ordered passing atoms joined by 'then'/'and' connectors."""

    atoms: tuple
    connectors: tuple

    @classmethod
    def from_atoms(cls, atoms, simultaneity: float = 0.2) -> "SemanticDescription":
        ordered = tuple(sorted(atoms, key=lambda a: (a.time, a.obstacle)))
        connectors = tuple(
            "and" if abs(b.time - a.time) < simultaneity else "then"
            for a, b in zip(ordered, ordered[1:])
        )
        return cls(ordered, connectors)

    def __len__(self) -> int:
        return len(self.atoms)

    @property
    def keys(self):
        return [a.key for a in self.atoms]

    def text(self) -> str:
        if not self.atoms:
            return "(no passing)"
        parts = [self.atoms[0].text()]
        for connector, atom in zip(self.connectors, self.atoms[1:]):
            parts.append(connector)
            parts.append(atom.text())
        return " ".join(parts)


@dataclass(frozen=True)
class CandidateScore:
    j_traj: float
    j_cons: float
    j_total: float
    description: SemanticDescription


def extract_semantics(
    traj: PlannedTrajectory,
    scene: list,
    curve: ReferenceCurve,
    simultaneity: float = 0.2,
) -> SemanticDescription:
    """Passing atoms for every obstacle whose arc-length interval the ego
    enters within the horizon.

    The intersection time is the first planning step at which the ego's s
    reaches the obstacle's occupied interval while having been behind it;
    the side is left when the ego's lateral offset exceeds the obstacle's
    centerline offset there.  Obstacles never reached produce no atom.
    """
    rel_times = traj.times - traj.times[0]
    s_ego = np.array([st.s for st in traj.longitudinal])
    d_ego = np.array([st.d for st in traj.lateral])
    atoms = []
    for pred in scene:
        extents = [frenet_extent(fp, curve) for fp in pred.footprints]
        spans = np.array([(e[0], e[1]) for e in extents])
        centers = np.array([0.5 * (e[2] + e[3]) for e in extents])
        pred_times = pred.prediction_times

        def bucket(t: float) -> int:
            idx = int(np.searchsorted(pred_times, t + 1e-9, side="right")) - 1
            return min(max(idx, 0), len(pred_times) - 1)

        hit = None
        for k in range(len(s_ego)):
            p = bucket(rel_times[k])
            lo, hi = spans[p]
            if s_ego[k] >= lo:
                prev_ok = k == 0 or s_ego[k - 1] < spans[bucket(rel_times[k - 1])][1]
                inside_now = s_ego[k] <= hi or (k > 0 and prev_ok)
                if k == 0 and s_ego[0] > hi:
                    break  # started already beyond this obstacle
                if inside_now:
                    hit = (k, p)
                break
        if hit is not None:
            k, p = hit
            side = "left" if d_ego[k] > centers[p] else "right"
            atoms.append(PassingAtom(pred.id, side, float(traj.times[k])))
    return SemanticDescription.from_atoms(atoms, simultaneity)


def trajectory_cost(
    traj: PlannedTrajectory, weights: Optional[ReasoningWeights] = None
) -> float:
    """Mean per-step comfort and corridor-centering cost.

    Sums weighted squares of acceleration, jerk, offset from the corridor
    midline (half the sum of the transformed lateral bounds), and curvature
    rate, averaged over the horizon.
    """
    w = weights or ReasoningWeights()
    accel = np.array([st.a for st in traj.longitudinal[1:]])
    jerk = np.array([st.j for st in traj.longitudinal[1:]])
    d = np.array([st.d for st in traj.lateral[1:]])
    d_ref = 0.5 * (traj.d_bounds[:, 0] + traj.d_bounds[:, 1])
    kappa_rate = traj.u_lateral
    terms = (
        w.accel * accel**2
        + w.jerk * jerk**2
        + w.centering * (d - d_ref) ** 2
        + w.curvature_rate * kappa_rate**2
    )
    return float(terms.mean())


def _lcs_length(a: list, b: list) -> int:
    """Longest common subsequence length over (obstacle, side) keys."""
    if not a or not b:
        return 0
    table = np.zeros((len(a) + 1, len(b) + 1), dtype=int)
    for i, ka in enumerate(a, start=1):
        for j, kb in enumerate(b, start=1):
            if ka == kb:
                table[i, j] = table[i - 1, j - 1] + 1
            else:
                table[i, j] = max(table[i - 1, j], table[i, j - 1])
    return int(table[len(a), len(b)])


def consistency_cost(
    current: SemanticDescription,
    previous: Optional[SemanticDescription],
    weight: float,
    n_max: Optional[int] = None,
) -> float:
    """Penalty for switching away from the previously described maneuver.

    Matching atoms are counted as the longest order-preserving common
    subsequence of (obstacle, side) pairs; the penalty scales with how many
    of the longer description's atoms fail to match.  The first planning
    cycle (no previous description) costs nothing.
    """
    if previous is None:
        return 0.0
    matched = _lcs_length(current.keys, previous.keys)
    if n_max is None:
        n_max = max(len(current), len(previous))
    return float(weight * (n_max - matched))


def select_trajectory(
    candidates: list,
    previous: Optional[SemanticDescription],
    weights: Optional[ReasoningWeights] = None,
    curve: Optional[ReferenceCurve] = None,
    scene: Optional[list] = None,
    simultaneity: float = 0.2,
):
    """Pick the candidate minimizing total cost.

    ``candidates`` is a list of (PlannedTrajectory, ManeuverEnvelope) pairs.
    Ties break first toward the candidate whose semantics equal the previous
    description, then toward the lowest maneuver enumeration index.  Returns
    (trajectory, CandidateScore).
    """
    if not candidates:
        raise NoFeasibleCandidate("no feasible maneuver candidates")
    w = weights or ReasoningWeights()
    scored = []
    for traj, _envelope in candidates:
        description = extract_semantics(traj, scene or [], curve, simultaneity)
        j_traj = trajectory_cost(traj, w)
        j_cons = consistency_cost(description, previous, w.consistency)
        scored.append(
            (traj, CandidateScore(j_traj, j_cons, j_traj + j_cons, description))
        )

    # Candidates within a relative epsilon of the best total are ties
    # (identical problems solved from different warm starts differ only in
    # the last bits); ties break toward the previous description, then the
    # lowest enumeration index.
    best_total = min(score.j_total for _, score in scored)
    epsilon = 1e-9 * (1.0 + abs(best_total))

    def sort_key(item):
        traj, score = item
        matches_previous = (
            previous is not None and score.description.keys == previous.keys
        )
        tied_total = score.j_total if score.j_total > best_total + epsilon else best_total
        return (tied_total, 0 if matches_previous else 1, traj.maneuver.index)

    return min(scored, key=sort_key)
