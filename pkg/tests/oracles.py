"""Independent oracles used by the unit and acceptance suites.

Deliberately avoid the implementations under test: box overlap via dense
boundary sampling plus containment (exact for convex shapes up to sampling
resolution), optimal transport via scipy linprog, polyline distances via
shapely.
"""
import math

import numpy as np
from scipy.optimize import linprog
from shapely.geometry import LineString, Point

from advsim.geometry import OrientedBox


def box_corners(box: OrientedBox) -> np.ndarray:
    c, s = math.cos(box.heading), math.sin(box.heading)
    hl, hw = box.length / 2.0, box.width / 2.0
    local = np.array([(hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw)])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.asarray(box.center)


def boundary_points(box: OrientedBox, step: float = 0.001) -> np.ndarray:
    corners = box_corners(box)
    pts = []
    for a, b in zip(corners, np.roll(corners, -1, axis=0)):
        n = max(2, int(math.ceil(np.hypot(*(b - a)) / step)) + 1)
        frac = np.linspace(0.0, 1.0, n, endpoint=False)[:, None]
        pts.append(a + frac * (b - a))
    return np.concatenate(pts)


def points_in_box(points: np.ndarray, box: OrientedBox) -> np.ndarray:
    rel = points - np.asarray(box.center)
    c, s = math.cos(box.heading), math.sin(box.heading)
    u = rel[:, 0] * c + rel[:, 1] * s
    v = -rel[:, 0] * s + rel[:, 1] * c
    return (np.abs(u) <= box.length / 2.0) & (np.abs(v) <= box.width / 2.0)


def boxes_intersect_sampled(a: OrientedBox, b: OrientedBox, step: float = 0.001) -> bool:
    """Dense-sampling overlap test: boundary crossing or full containment."""
    if points_in_box(boundary_points(a, step), b).any():
        return True
    if points_in_box(boundary_points(b, step), a).any():
        return True
    if points_in_box(np.array([a.center]), b)[0]:
        return True
    return bool(points_in_box(np.array([b.center]), a)[0])


def resized(box: OrientedBox, delta: float) -> OrientedBox:
    """Grow (delta > 0) or shrink each side by delta meters."""
    return OrientedBox(
        center=box.center,
        heading=box.heading,
        length=max(box.length + 2 * delta, 1e-6),
        width=max(box.width + 2 * delta, 1e-6),
    )


def classify_pair(a: OrientedBox, b: OrientedBox, margin: float = 0.002):
    """'overlap' / 'clear' with at least `margin` to spare, else 'band'.

    Shrunken-box overlap implies true overlap (soundness does not depend on
    sampling); inflated-box separation implies true clearance because a
    margin-deep incursion cannot slip between 1 mm boundary samples.
    """
    if boxes_intersect_sampled(resized(a, -margin), resized(b, -margin)):
        return "overlap"
    if not boxes_intersect_sampled(resized(a, margin), resized(b, margin)):
        return "clear"
    return "band"


def wasserstein_lp(sample_p, sample_q) -> float:
    """Empirical 1-Wasserstein via the optimal-transport linear program."""
    p = np.asarray(sample_p, dtype=float)
    q = np.asarray(sample_q, dtype=float)
    n, m = len(p), len(q)
    cost = np.abs(p[:, None] - q[None, :]).ravel()
    a_eq = []
    b_eq = []
    for i in range(n):
        row = np.zeros(n * m)
        row[i * m : (i + 1) * m] = 1.0
        a_eq.append(row)
        b_eq.append(1.0 / n)
    for j in range(m):
        row = np.zeros(n * m)
        row[j::m] = 1.0
        a_eq.append(row)
        b_eq.append(1.0 / m)
    res = linprog(cost, A_eq=np.array(a_eq), b_eq=np.array(b_eq), method="highs")
    assert res.success
    return float(res.fun)


def point_polyline_distance_shapely(p, line) -> float:
    return Point(p).distance(LineString(line))


def polyline_distances_brute(points, line) -> np.ndarray:
    geom = LineString(line)
    return np.array([Point(p).distance(geom) for p in points])
