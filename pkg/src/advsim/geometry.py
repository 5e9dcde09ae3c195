"""Planar geometry primitives: oriented-box overlap, polyline distance,
trajectory-pair collision.

All functions are pure and safe for parallel invocation. Box overlap uses the
separating-axis test over the two unique edge normals of each rectangle;
touching boundaries count as overlap (conservative for safety evaluation).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import GridError, ScenarioValidationError
from .scenario import Pose, TrajectoryHypothesis


@dataclass(frozen=True)
class OrientedBox:
    center: tuple[float, float]
    heading: float
    length: float
    width: float

    def __post_init__(self):
        if not all(
            math.isfinite(v)
            for v in (*self.center, self.heading, self.length, self.width)
        ):
            raise ScenarioValidationError("non-finite oriented box")
        if self.length <= 0 or self.width <= 0:
            raise ScenarioValidationError("non-positive box extents")

    def corners(self) -> list[tuple[float, float]]:
        cx, cy = self.center
        c, s = math.cos(self.heading), math.sin(self.heading)
        hl, hw = 0.5 * self.length, 0.5 * self.width
        return [
            (cx + dx * c - dy * s, cy + dx * s + dy * c)
            for dx, dy in ((hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw))
        ]

    @property
    def circumradius(self) -> float:
        return 0.5 * math.hypot(self.length, self.width)


@dataclass(frozen=True)
class CollisionReport:
    """Outcome of a trajectory-pair (or episode) collision check."""

    occurred: bool
    time: float | None = None
    relative_speed: float | None = None

    def __post_init__(self):
        if self.occurred:
            if self.time is None or self.relative_speed is None:
                raise ScenarioValidationError("collision report missing time/speed")
            if self.relative_speed < 0:
                raise ScenarioValidationError("negative relative speed")
        elif self.time is not None or self.relative_speed is not None:
            raise ScenarioValidationError("no-collision report carries time/speed")


def box_for_pose(pose: Pose, length: float, width: float) -> OrientedBox:
    return OrientedBox((pose.x, pose.y), pose.heading, length, width)


def _project_overlap(corners_a, corners_b, axis) -> bool:
    ax, ay = axis
    dots_a = [cx * ax + cy * ay for cx, cy in corners_a]
    dots_b = [cx * ax + cy * ay for cx, cy in corners_b]
    return not (max(dots_a) < min(dots_b) or max(dots_b) < min(dots_a))


def boxes_intersect(a: OrientedBox, b: OrientedBox) -> bool:
    """True iff the closed rectangles overlap (touching counts)."""
    dx = b.center[0] - a.center[0]
    dy = b.center[1] - a.center[1]
    if math.hypot(dx, dy) > a.circumradius + b.circumradius:
        return False
    ca, cb = a.corners(), b.corners()
    for heading in (a.heading, b.heading):
        c, s = math.cos(heading), math.sin(heading)
        if not _project_overlap(ca, cb, (c, s)):
            return False
        if not _project_overlap(ca, cb, (-s, c)):
            return False
    return True


def _time_keys(poses: Sequence[Pose]) -> list[int]:
    # Quantize to microseconds so grids produced by independent float paths
    # still align; dt values of interest are far coarser than 1e-6 s.
    return [round(p.t * 1e6) for p in poses]


def trajectory_collision(
    y_a: TrajectoryHypothesis,
    y_b: TrajectoryHypothesis,
    box_a: tuple[float, float],
    box_b: tuple[float, float],
) -> CollisionReport:
    """First-overlap check of two pose sequences on a shared time grid.

    Returns the earliest common timestamp at which the agents' boxes overlap,
    with the relative speed taken as the magnitude of the velocity-vector
    difference there (velocities from each pose's speed along its heading).
    """
    keys_a = _time_keys(y_a.poses)
    keys_b = _time_keys(y_b.poses)
    index_b = {k: i for i, k in enumerate(keys_b)}
    common = [(k, i, index_b[k]) for i, k in enumerate(keys_a) if k in index_b]
    if not common:
        raise GridError("pose sequences share no common timestamps")

    la, wa = box_a
    lb, wb = box_b
    reach = 0.5 * (math.hypot(la, wa) + math.hypot(lb, wb))
    pa = np.array([(y_a.poses[i].x, y_a.poses[i].y) for _, i, _ in common])
    pb = np.array([(y_b.poses[j].x, y_b.poses[j].y) for _, _, j in common])
    near = np.hypot(pa[:, 0] - pb[:, 0], pa[:, 1] - pb[:, 1]) <= reach

    for idx in np.flatnonzero(near):
        _, i, j = common[idx]
        pose_a, pose_b = y_a.poses[i], y_b.poses[j]
        if boxes_intersect(box_for_pose(pose_a, la, wa), box_for_pose(pose_b, lb, wb)):
            vax, vay = pose_a.velocity()
            vbx, vby = pose_b.velocity()
            return CollisionReport(
                occurred=True,
                time=pose_a.t,
                relative_speed=math.hypot(vax - vbx, vay - vby),
            )
    return CollisionReport(occurred=False)


def overlap_count(
    y_a: TrajectoryHypothesis,
    y_b: TrajectoryHypothesis,
    box_a: tuple[float, float],
    box_b: tuple[float, float],
) -> int:
    """Number of common timestamps at which the two agents' boxes overlap."""
    keys_a = _time_keys(y_a.poses)
    keys_b = _time_keys(y_b.poses)
    index_b = {k: i for i, k in enumerate(keys_b)}
    common = [(i, index_b[k]) for i, k in enumerate(keys_a) if k in index_b]
    if not common:
        raise GridError("pose sequences share no common timestamps")
    la, wa = box_a
    lb, wb = box_b
    reach = 0.5 * (math.hypot(la, wa) + math.hypot(lb, wb))
    pa = np.array([(y_a.poses[i].x, y_a.poses[i].y) for i, _ in common])
    pb = np.array([(y_b.poses[j].x, y_b.poses[j].y) for _, j in common])
    near = np.hypot(pa[:, 0] - pb[:, 0], pa[:, 1] - pb[:, 1]) <= reach
    count = 0
    for idx in np.flatnonzero(near):
        i, j = common[idx]
        if boxes_intersect(
            box_for_pose(y_a.poses[i], la, wa), box_for_pose(y_b.poses[j], lb, wb)
        ):
            count += 1
    return count


def points_to_polyline_distances(points: np.ndarray, line: np.ndarray) -> np.ndarray:
    """Euclidean distance from each point to the nearest segment of a polyline.

    points: (N, 2); line: (K, 2) with K >= 2. Vectorized over all N x (K-1)
    point/segment combinations.
    """
    points = np.asarray(points, dtype=float)
    line = np.asarray(line, dtype=float)
    starts = line[:-1]
    ends = line[1:]
    seg = ends - starts
    seg_len2 = np.einsum("ij,ij->i", seg, seg)
    seg_len2 = np.where(seg_len2 == 0.0, 1.0, seg_len2)
    rel = points[:, None, :] - starts[None, :, :]
    frac = np.clip(np.einsum("nkj,kj->nk", rel, seg) / seg_len2[None, :], 0.0, 1.0)
    nearest = starts[None, :, :] + frac[:, :, None] * seg[None, :, :]
    diff = points[:, None, :] - nearest
    return np.sqrt(np.einsum("nkj,nkj->nk", diff, diff).min(axis=1))


def point_to_polyline_distance(
    p: tuple[float, float], line: Sequence[tuple[float, float]]
) -> float:
    """Exact distance from a point to the nearest segment of a polyline."""
    return float(points_to_polyline_distances(np.array([p]), np.asarray(line))[0])


def polyline_arclength(line: np.ndarray) -> np.ndarray:
    """Cumulative arc length at each vertex, starting at 0."""
    line = np.asarray(line, dtype=float)
    steps = np.hypot(np.diff(line[:, 0]), np.diff(line[:, 1]))
    return np.concatenate(([0.0], np.cumsum(steps)))


def project_onto_polyline(
    p: tuple[float, float], line: np.ndarray
) -> tuple[float, float]:
    """(arc position, signed lateral offset) of a point relative to a polyline.

    Lateral offset is positive to the left of the travel direction.
    """
    line = np.asarray(line, dtype=float)
    starts, ends = line[:-1], line[1:]
    seg = ends - starts
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    seg_len = np.where(seg_len == 0.0, 1.0, seg_len)
    rel = np.asarray(p, dtype=float) - starts
    frac = np.clip((rel * seg).sum(axis=1) / seg_len**2, 0.0, 1.0)
    nearest = starts + frac[:, None] * seg
    diff = np.asarray(p) - nearest
    dist2 = (diff * diff).sum(axis=1)
    k = int(np.argmin(dist2))
    cum = polyline_arclength(line)
    s = cum[k] + frac[k] * seg_len[k]
    tx, ty = seg[k] / seg_len[k]
    lateral = -diff[k, 0] * ty + diff[k, 1] * tx
    return float(s), float(lateral)


def interpolate_along_polyline(line: np.ndarray, s: float) -> tuple[float, float, float]:
    """(x, y, tangent heading) at arc position s; extrapolates past the ends."""
    line = np.asarray(line, dtype=float)
    cum = polyline_arclength(line)
    total = cum[-1]
    if s <= 0.0:
        seg = line[1] - line[0]
        h = math.atan2(seg[1], seg[0])
        x = line[0, 0] + s * math.cos(h)
        y = line[0, 1] + s * math.sin(h)
        return float(x), float(y), h
    if s >= total:
        seg = line[-1] - line[-2]
        h = math.atan2(seg[1], seg[0])
        extra = s - total
        return (
            float(line[-1, 0] + extra * math.cos(h)),
            float(line[-1, 1] + extra * math.sin(h)),
            h,
        )
    k = int(np.searchsorted(cum, s, side="right") - 1)
    seg = line[k + 1] - line[k]
    seg_len = math.hypot(seg[0], seg[1])
    frac = (s - cum[k]) / seg_len
    h = math.atan2(seg[1], seg[0])
    return (
        float(line[k, 0] + frac * seg[0]),
        float(line[k, 1] + frac * seg[1]),
        h,
    )
