import math

import numpy as np
import pytest

from advsim.errors import GridError
from advsim.geometry import (
    CollisionReport,
    OrientedBox,
    boxes_intersect,
    interpolate_along_polyline,
    overlap_count,
    point_to_polyline_distance,
    points_to_polyline_distances,
    project_onto_polyline,
    trajectory_collision,
)
from advsim.scenario import Pose, TrajectoryHypothesis

from .oracles import classify_pair, point_polyline_distance_shapely

BOX = dict(length=4.0, width=2.0)


def straight_hypothesis(x0, y0, heading, speed, t0=0.0, n=50, dt=0.1):
    poses = tuple(
        Pose(
            t=t0 + (i + 1) * dt,
            x=x0 + speed * math.cos(heading) * (i + 1) * dt,
            y=y0 + speed * math.sin(heading) * (i + 1) * dt,
            heading=heading,
            speed=speed,
        )
        for i in range(n)
    )
    return TrajectoryHypothesis(poses=poses, probability=1.0)


def test_identical_boxes_intersect():
    a = OrientedBox(center=(0.0, 0.0), heading=0.0, **BOX)
    b = OrientedBox(center=(0.0, 0.0), heading=0.0, **BOX)
    assert boxes_intersect(a, b)


def test_separated_boxes_do_not_intersect():
    a = OrientedBox(center=(0.0, 0.0), heading=0.0, **BOX)
    b = OrientedBox(center=(10.0, 0.0), heading=0.0, **BOX)
    assert not boxes_intersect(a, b)


def test_touching_boxes_count_as_overlap():
    a = OrientedBox(center=(0.0, 0.0), heading=0.0, **BOX)
    b = OrientedBox(center=(4.0, 0.0), heading=0.0, **BOX)
    assert boxes_intersect(a, b)


def test_rotated_pair_matches_oracle():
    a = OrientedBox(center=(0.0, 0.0), heading=0.0, **BOX)
    b = OrientedBox(center=(3.4, 0.0), heading=math.pi / 4, **BOX)
    verdict = classify_pair(a, b)
    assert verdict != "band"
    assert boxes_intersect(a, b) == (verdict == "overlap")


def random_box(rng, span=3.0):
    return OrientedBox(
        center=(float(rng.uniform(-span, span)), float(rng.uniform(-span, span))),
        heading=float(rng.uniform(-math.pi, math.pi)),
        length=float(rng.uniform(0.5, 3.0)),
        width=float(rng.uniform(0.3, 2.0)),
    )


def test_randomized_pairs_against_sampling_oracle(rng):
    checked = 0
    for _ in range(1000):
        a, b = random_box(rng), random_box(rng)
        verdict = classify_pair(a, b)
        if verdict == "band":
            continue
        checked += 1
        assert boxes_intersect(a, b) == (verdict == "overlap"), (a, b)
    assert checked > 800


def test_symmetry_randomized(rng):
    for _ in range(500):
        a, b = random_box(rng), random_box(rng)
        assert boxes_intersect(a, b) == boxes_intersect(b, a)


def test_rigid_transform_invariance(rng):
    for _ in range(200):
        a, b = random_box(rng), random_box(rng)
        base = boxes_intersect(a, b)
        angle = float(rng.uniform(-math.pi, math.pi))
        tx, ty = rng.uniform(-50, 50, size=2)
        c, s = math.cos(angle), math.sin(angle)

        def moved(box):
            x, y = box.center
            return OrientedBox(
                center=(c * x - s * y + tx, s * x + c * y + ty),
                heading=box.heading + angle,
                length=box.length,
                width=box.width,
            )

        assert boxes_intersect(moved(a), moved(b)) == base


def test_identical_trajectories_collide_at_first_step():
    y = straight_hypothesis(0.0, 0.0, 0.0, 5.0)
    report = trajectory_collision(y, y, (4.0, 2.0), (4.0, 2.0))
    assert report.occurred
    assert report.time == pytest.approx(0.1)
    assert report.relative_speed == pytest.approx(0.0)


def test_parallel_trajectories_do_not_collide():
    a = straight_hypothesis(0.0, 0.0, 0.0, 5.0)
    b = straight_hypothesis(0.0, 10.0, 0.0, 5.0)
    report = trajectory_collision(a, b, (4.0, 2.0), (4.0, 2.0))
    assert not report.occurred
    assert report.time is None


def test_perpendicular_crossing_at_three_seconds():
    # Both agents reach (15, 0) at t = 3.0 s moving at 5 m/s, at a right angle.
    a = straight_hypothesis(0.0, 0.0, 0.0, 5.0, n=50)
    b = straight_hypothesis(15.0, -15.0, math.pi / 2, 5.0, n=50)
    report = trajectory_collision(a, b, (1.0, 1.0), (1.0, 1.0))
    assert report.occurred
    # Boxes of finite extent touch shortly before the centers meet; never after.
    assert report.time <= 3.0
    assert report.time >= 2.5
    assert report.relative_speed == pytest.approx(math.sqrt(50.0), abs=1e-9)


def test_collision_time_is_minimal(rng):
    for _ in range(50):
        a = straight_hypothesis(0.0, 0.0, 0.0, float(rng.uniform(1, 8)))
        b = straight_hypothesis(
            float(rng.uniform(5, 20)), float(rng.uniform(-5, 5)), math.pi, float(rng.uniform(1, 8))
        )
        report = trajectory_collision(a, b, (4.0, 2.0), (4.0, 2.0))
        if not report.occurred:
            continue
        for pa, pb in zip(a.poses, b.poses):
            if pa.t >= report.time:
                break
            assert not boxes_intersect(
                OrientedBox(center=(pa.x, pa.y), heading=pa.heading, **BOX),
                OrientedBox(center=(pb.x, pb.y), heading=pb.heading, **BOX),
            )


def test_mismatched_grids_raise():
    a = straight_hypothesis(0.0, 0.0, 0.0, 5.0, dt=0.1)
    b = straight_hypothesis(0.0, 0.0, 0.0, 5.0, t0=0.05, dt=0.1)
    with pytest.raises(GridError):
        trajectory_collision(a, b, (4.0, 2.0), (4.0, 2.0))


def test_overlap_count_matches_manual():
    a = straight_hypothesis(0.0, 0.0, 0.0, 5.0, n=30)
    b = straight_hypothesis(1.0, 0.0, 0.0, 5.0, n=30)  # always overlapping
    assert overlap_count(a, b, (4.0, 2.0), (4.0, 2.0)) == 30
    c = straight_hypothesis(0.0, 50.0, 0.0, 5.0, n=30)
    assert overlap_count(a, c, (4.0, 2.0), (4.0, 2.0)) == 0


def test_point_on_vertex_distance_zero():
    assert point_to_polyline_distance((1.0, 1.0), ((0.0, 0.0), (1.0, 1.0), (2.0, 0.0))) == 0.0


def test_point_above_segment():
    assert point_to_polyline_distance((0.0, 1.0), ((-1.0, 0.0), (1.0, 0.0))) == pytest.approx(1.0)


def test_random_points_match_shapely_oracle(rng):
    line = np.cumsum(rng.uniform(-1, 1, size=(101, 2)), axis=0)
    points = rng.uniform(-5, 5, size=(50, 2))
    ours = points_to_polyline_distances(points, line)
    for p, d in zip(points, ours):
        assert d == pytest.approx(point_polyline_distance_shapely(p, line), abs=1e-9)


def test_distance_rigid_invariance(rng):
    line = np.cumsum(rng.uniform(-1, 1, size=(20, 2)), axis=0)
    p = np.array([1.7, -2.3])
    base = point_to_polyline_distance(tuple(p), line)
    angle, tx, ty = 0.7, 12.0, -4.0
    rot = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    moved_line = line @ rot.T + (tx, ty)
    moved_p = rot @ p + (tx, ty)
    assert point_to_polyline_distance(tuple(moved_p), moved_line) == pytest.approx(base, abs=1e-9)


def test_projection_and_interpolation_agree():
    line = np.array([(0.0, 0.0), (10.0, 0.0), (10.0, 10.0)])
    s, lateral = project_onto_polyline((5.0, 1.0), line)
    assert s == pytest.approx(5.0)
    assert lateral == pytest.approx(1.0)  # left of travel direction
    x, y, heading = interpolate_along_polyline(line, 15.0)
    assert (x, y) == (pytest.approx(10.0), pytest.approx(5.0))
    assert heading == pytest.approx(math.pi / 2)


def test_interpolation_extrapolates_past_ends():
    line = np.array([(0.0, 0.0), (10.0, 0.0)])
    x, y, _ = interpolate_along_polyline(line, 12.0)
    assert (x, y) == (pytest.approx(12.0), pytest.approx(0.0))
    x, y, _ = interpolate_along_polyline(line, -2.0)
    assert (x, y) == (pytest.approx(-2.0), pytest.approx(0.0))


def test_collision_report_invariants():
    with pytest.raises(Exception):
        CollisionReport(occurred=True, time=None, relative_speed=None)
    with pytest.raises(Exception):
        CollisionReport(occurred=False, time=1.0, relative_speed=1.0)
    with pytest.raises(Exception):
        CollisionReport(occurred=True, time=1.0, relative_speed=-0.5)
