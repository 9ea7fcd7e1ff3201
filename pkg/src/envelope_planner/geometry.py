"""Reference-curve geometry, Frenet-frame conversions, and polygon utilities.

The reference curve is a discrete waypoint polyline with no smoothness
requirement.  Lateral offsets are signed with d > 0 to the left of the
driving direction.  All values are immutable after construction and every
operation is a pure function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class PointOutOfCorridor(ValueError):
    """Projection target is farther from the curve than the corridor allows."""


class SOutOfRange(ValueError):
    """Arc length outside [0, total curve length]."""


def wrap_angle(angle):
    """Wrap an angle (or array of angles) to [-pi, pi)."""
    return (np.asarray(angle) + np.pi) % (2.0 * np.pi) - np.pi


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ReferenceCurve:
    """Polyline reference path with arc-length parametrization.

    Attributes:
        waypoints: (M, 2) ordered points in meters.
        cumulative_arc_length: (M,) arc length at each waypoint, starts at 0
            and is strictly increasing.
        heading: (M,) tangent angle in radians; index i carries the direction
            of the segment leaving waypoint i (the last entry repeats its
            predecessor).
        curvature: (M,) finite-difference curvature in 1/m.
    """

    waypoints: np.ndarray
    cumulative_arc_length: np.ndarray
    heading: np.ndarray
    curvature: np.ndarray

    @classmethod
    def from_waypoints(cls, points) -> "ReferenceCurve":
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
            raise ValueError("reference curve needs at least two 2-D waypoints")
        diffs = np.diff(pts, axis=0)
        seg_len = np.hypot(diffs[:, 0], diffs[:, 1])
        if np.any(seg_len <= 0.0):
            raise ValueError("consecutive waypoints must be distinct")
        arc = np.concatenate(([0.0], np.cumsum(seg_len)))
        seg_heading = np.arctan2(diffs[:, 1], diffs[:, 0])
        heading = np.append(seg_heading, seg_heading[-1])
        curvature = np.zeros(len(pts))
        if len(pts) > 2:
            # Turn angle at each interior vertex over the mean adjacent
            # segment length; endpoints copy their neighbor.
            turn = wrap_angle(np.diff(seg_heading))
            span = 0.5 * (seg_len[:-1] + seg_len[1:])
            curvature[1:-1] = turn / span
            curvature[0] = curvature[1]
            curvature[-1] = curvature[-2]
        return cls(
            _readonly(pts), _readonly(arc), _readonly(heading), _readonly(curvature)
        )

    @property
    def total_length(self) -> float:
        return float(self.cumulative_arc_length[-1])

    def _segment_index(self, s: float) -> int:
        idx = int(np.searchsorted(self.cumulative_arc_length, s, side="right")) - 1
        return min(max(idx, 0), len(self.waypoints) - 2)

    def point_at(self, s: float) -> np.ndarray:
        """Interpolated point on the polyline at arc length s."""
        i = self._segment_index(s)
        t = s - self.cumulative_arc_length[i]
        direction = np.array([math.cos(self.heading[i]), math.sin(self.heading[i])])
        return self.waypoints[i] + t * direction

    def heading_at(self, s: float) -> float:
        """Tangent angle of the segment containing s."""
        return float(self.heading[self._segment_index(s)])

    def curvature_at(self, s: float) -> float:
        """Linearly interpolated curvature at arc length s."""
        return float(np.interp(s, self.cumulative_arc_length, self.curvature))

    def offset_point(self, s: float, d: float) -> np.ndarray:
        """Point at arc length s displaced d along the left normal."""
        i = self._segment_index(s)
        t = s - self.cumulative_arc_length[i]
        theta = self.heading[i]
        direction = np.array([math.cos(theta), math.sin(theta)])
        normal = np.array([-math.sin(theta), math.cos(theta)])
        return self.waypoints[i] + t * direction + d * normal


@dataclass(frozen=True)
class FrenetPose:
    """Curve-relative pose: arc length s, signed lateral offset d (left > 0),
    absolute heading theta, and path curvature kappa."""

    s: float
    d: float
    theta: float
    kappa: float = 0.0


def project_to_frenet(point, curve: ReferenceCurve, corridor: float = 50.0):
    """Project a point onto the curve polyline.

    Returns (s, d) of the closest polyline point, d signed positive left.
    Projection uses exact per-segment orthogonal projection with ties broken
    toward smaller s.  Raises PointOutOfCorridor if the closest segment is
    farther than ``corridor``.
    """
    p = np.asarray(point, dtype=float)
    starts = curve.waypoints[:-1]
    diffs = np.diff(curve.waypoints, axis=0)
    seg_len_sq = np.einsum("ij,ij->i", diffs, diffs)
    rel = p[None, :] - starts
    t = np.clip(np.einsum("ij,ij->i", rel, diffs) / seg_len_sq, 0.0, 1.0)
    proj = starts + t[:, None] * diffs
    resid = p[None, :] - proj
    dist_sq = np.einsum("ij,ij->i", resid, resid)
    best = int(np.argmin(dist_sq))  # argmin keeps the first (smallest-s) tie
    dist = math.sqrt(dist_sq[best])
    if dist > corridor:
        raise PointOutOfCorridor(
            f"point {p.tolist()} is {dist:.2f} m from the curve "
            f"(corridor {corridor:.2f} m)"
        )
    seg_len = math.sqrt(seg_len_sq[best])
    s = float(curve.cumulative_arc_length[best] + t[best] * seg_len)
    cross = diffs[best, 0] * resid[best, 1] - diffs[best, 1] * resid[best, 0]
    d = dist if cross >= 0.0 else -dist
    return s, d


def frenet_to_cartesian(pose: FrenetPose, curve: ReferenceCurve):
    """Convert a Frenet pose to world coordinates (x, y, heading).

    The base point is interpolated along the polyline at pose.s and offset by
    pose.d along the left normal of the containing segment; the returned
    heading is pose.theta (absolute).  Raises SOutOfRange for s outside the
    curve.
    """
    if pose.s < -1e-9 or pose.s > curve.total_length + 1e-9:
        raise SOutOfRange(
            f"s={pose.s:.3f} outside [0, {curve.total_length:.3f}]"
        )
    xy = curve.offset_point(min(max(pose.s, 0.0), curve.total_length), pose.d)
    return float(xy[0]), float(xy[1]), float(pose.theta)


# ---------------------------------------------------------------------------
# Polygons
# ---------------------------------------------------------------------------

def _shoelace_twice(vertices: np.ndarray) -> float:
    x, y = vertices[:, 0], vertices[:, 1]
    return float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a, b, p, eps=1e-12) -> bool:
    if abs(_orient(a, b, p)) > eps * (1.0 + abs(a[0]) + abs(b[0]) + abs(p[0])):
        return False
    return (
        min(a[0], b[0]) - eps <= p[0] <= max(a[0], b[0]) + eps
        and min(a[1], b[1]) - eps <= p[1] <= max(a[1], b[1]) + eps
    )


def segments_intersect(a1, a2, b1, b2) -> bool:
    """Closed-set segment intersection test (touching counts)."""
    d1 = _orient(b1, b2, a1)
    d2 = _orient(b1, b2, a2)
    d3 = _orient(a1, a2, b1)
    d4 = _orient(a1, a2, b2)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and (
        (d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)
    ):
        return True
    return (
        _on_segment(b1, b2, a1)
        or _on_segment(b1, b2, a2)
        or _on_segment(a1, a2, b1)
        or _on_segment(a1, a2, b2)
    )


@dataclass(frozen=True)
class Polygon:
    """Simple polygon with counter-clockwise vertex order."""

    vertices: np.ndarray

    @classmethod
    def from_vertices(cls, vertices) -> "Polygon":
        v = np.array(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise ValueError("polygon vertices must be an (K, 2) array")
        if v.shape[0] > 1 and np.allclose(v[0], v[-1]):
            v = v[:-1]
        if v.shape[0] < 3:
            raise ValueError("polygon needs at least 3 distinct vertices")
        area2 = _shoelace_twice(v)
        if abs(area2) < 1e-12:
            raise ValueError("degenerate polygon (zero area)")
        if area2 < 0.0:  # normalize CW input to CCW silently
            v = v[::-1].copy()
        cls._check_simple(v)
        return cls(_readonly(v))

    @staticmethod
    def _check_simple(v: np.ndarray) -> None:
        n = len(v)
        for i in range(n):
            a1, a2 = v[i], v[(i + 1) % n]
            for j in range(i + 1, n):
                if j == i or (j + 1) % n == i or (i + 1) % n == j:
                    continue  # adjacent edges share a vertex by construction
                if segments_intersect(a1, a2, v[j], v[(j + 1) % n]):
                    raise ValueError("polygon is self-intersecting")

    @property
    def bounds(self):
        """(xmin, ymin, xmax, ymax) axis-aligned bounding box."""
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    @property
    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def translated(self, offset) -> "Polygon":
        return Polygon(_readonly(self.vertices + np.asarray(offset, dtype=float)))

    def contains_point(self, point, eps: float = 1e-9) -> bool:
        """Closed-set point containment (boundary counts as inside)."""
        p = np.asarray(point, dtype=float)
        v = self.vertices
        n = len(v)
        for i in range(n):
            if _on_segment(v[i], v[(i + 1) % n], p, eps):
                return True
        return bool(_crossing_number(v, p[None, :])[0])

    def contains_points(self, points) -> np.ndarray:
        """Vectorized even-odd containment for an (Q, 2) array of points.

        Boundary points are not treated specially; intended for dense grid
        oracles where exact-boundary hits are measure zero.
        """
        return _crossing_number(self.vertices, np.asarray(points, dtype=float))


def _crossing_number(vertices: np.ndarray, points: np.ndarray) -> np.ndarray:
    x, y = points[:, 0], points[:, 1]
    inside = np.zeros(len(points), dtype=bool)
    v1 = vertices
    v2 = np.roll(vertices, -1, axis=0)
    for (x1, y1), (x2, y2) in zip(v1, v2):
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_int = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < np.where(crosses, x_int, np.inf))
    return inside


def polygon_intersects(a: Polygon, b: Polygon) -> bool:
    """True iff the polygon areas overlap or their boundaries touch."""
    ax0, ay0, ax1, ay1 = a.bounds
    bx0, by0, bx1, by1 = b.bounds
    if ax1 < bx0 or bx1 < ax0 or ay1 < by0 or by1 < ay0:
        return False
    va, vb = a.vertices, b.vertices
    na, nb = len(va), len(vb)
    for i in range(na):
        for j in range(nb):
            if segments_intersect(
                va[i], va[(i + 1) % na], vb[j], vb[(j + 1) % nb]
            ):
                return True
    # No boundary crossing: either disjoint or one fully inside the other.
    return a.contains_point(vb[0]) or b.contains_point(va[0])


def rectangle(center, length: float, width: float, heading: float = 0.0) -> Polygon:
    """Axis of the rectangle points along ``heading``; center at ``center``."""
    c, s = math.cos(heading), math.sin(heading)
    half_l, half_w = 0.5 * length, 0.5 * width
    corners = np.array(
        [[-half_l, -half_w], [half_l, -half_w], [half_l, half_w], [-half_l, half_w]]
    )
    rot = np.array([[c, -s], [s, c]])
    return Polygon.from_vertices(corners @ rot.T + np.asarray(center, dtype=float))
