import math

import numpy as np
import pytest

from advsim.errors import DataError, InsufficientDataError
from advsim.metrics import (
    acceleration_series,
    evaluate_batch,
    hausdorff,
    kl_divergence,
    sspd,
    wasserstein_1d,
)
from advsim.scenario import Pose

from .oracles import polyline_distances_brute, wasserstein_lp


def speed_track(speeds, dt=0.1):
    return [
        Pose(t=i * dt, x=i * dt, y=0.0, heading=0.0, speed=v)
        for i, v in enumerate(speeds)
    ]


def test_acceleration_constant_speed_is_zero():
    acc = acceleration_series(speed_track([5.0] * 10))
    assert acc == [pytest.approx(0.0)] * 8


def test_acceleration_linear_ramp_is_exact():
    track = speed_track([i * 0.1 for i in range(20)])  # speed = t
    acc = acceleration_series(track)
    assert all(a == pytest.approx(1.0, abs=1e-9) for a in acc)


def test_acceleration_matches_finite_difference_oracle(rng):
    speeds = rng.uniform(0, 20, size=40)
    track = speed_track(list(speeds))
    acc = acceleration_series(track)
    for i, a in enumerate(acc):
        expected = (speeds[i + 2] - speeds[i]) / 0.2
        assert a == pytest.approx(expected, abs=1e-12)


def test_acceleration_too_short():
    with pytest.raises(InsufficientDataError):
        acceleration_series(speed_track([1.0, 2.0]))


def test_kl_identical_samples_near_zero(rng):
    sample = list(rng.normal(0, 2, size=500))
    assert kl_divergence(sample, sample) <= 1e-4


def test_kl_disjoint_supports_finite():
    kl = kl_divergence([-5.0] * 100, [5.0] * 100)
    assert math.isfinite(kl)
    assert kl > 1.0


def test_kl_matches_reference_binned_formula(rng):
    p = rng.normal(0, 1, size=1000)
    q = rng.normal(1, 2, size=1000)
    bins = (50, -8.0, 8.0)
    # independent reimplementation
    edges = np.linspace(bins[1], bins[2], bins[0] + 1)
    hp, _ = np.histogram(np.clip(p, bins[1], bins[2]), bins=edges)
    hq, _ = np.histogram(np.clip(q, bins[1], bins[2]), bins=edges)
    dp = (hp + 1e-6) / (hp + 1e-6).sum()
    dq = (hq + 1e-6) / (hq + 1e-6).sum()
    expected = float((dp * np.log(dp / dq)).sum())
    assert kl_divergence(list(p), list(q), bins) == pytest.approx(expected, abs=1e-12)


def test_kl_permutation_invariant(rng):
    p = list(rng.normal(0, 1, size=200))
    q = list(rng.normal(0.5, 1, size=200))
    perm = rng.permutation(200)
    assert kl_divergence(p, q) == pytest.approx(
        kl_divergence([p[i] for i in perm], [q[i] for i in perm]), abs=1e-12
    )


def test_kl_empty_sample():
    with pytest.raises(DataError):
        kl_divergence([], [1.0])


def test_wasserstein_identical_zero():
    assert wasserstein_1d([1.0, 2.0, 3.0], [3.0, 1.0, 2.0]) == pytest.approx(0.0)


def test_wasserstein_point_masses():
    assert wasserstein_1d([0.0] * 5, [1.0] * 5) == pytest.approx(1.0)


def test_wasserstein_equal_sizes_sorted_mean(rng):
    for _ in range(20):
        p = rng.normal(0, 3, size=17)
        q = rng.normal(1, 2, size=17)
        expected = float(np.mean(np.abs(np.sort(p) - np.sort(q))))
        assert wasserstein_1d(p, q) == pytest.approx(expected, abs=1e-12)


def test_wasserstein_matches_lp_oracle(rng):
    for _ in range(10):
        n = int(rng.integers(2, 11))
        m = int(rng.integers(2, 11))
        p = rng.uniform(-5, 5, size=n)
        q = rng.uniform(-5, 5, size=m)
        assert wasserstein_1d(p, q) == pytest.approx(wasserstein_lp(p, q), abs=1e-9)


def test_wasserstein_symmetry_and_triangle(rng):
    for _ in range(30):
        a = rng.normal(0, 1, size=12)
        b = rng.normal(1, 2, size=9)
        c = rng.normal(-1, 0.5, size=15)
        dab = wasserstein_1d(a, b)
        assert dab == pytest.approx(wasserstein_1d(b, a), abs=1e-12)
        assert dab <= wasserstein_1d(a, c) + wasserstein_1d(c, b) + 1e-9


def test_sspd_identical_zero(rng):
    line = np.cumsum(rng.uniform(-1, 1, size=(20, 2)), axis=0)
    assert sspd(line, line) == pytest.approx(0.0)


def test_sspd_parallel_offset():
    a = np.array([(float(x), 0.0) for x in range(10)])
    b = a + (0.0, 1.0)
    assert sspd(a, b) == pytest.approx(1.0)
    assert hausdorff(a, b) == pytest.approx(1.0)


def test_sspd_symmetric_and_matches_brute_force(rng):
    for _ in range(10):
        a = np.cumsum(rng.uniform(-1, 1, size=(12, 2)), axis=0)
        b = np.cumsum(rng.uniform(-1, 1, size=(9, 2)), axis=0) + (2.0, 1.0)
        expected = 0.5 * (
            polyline_distances_brute(a, b).mean() + polyline_distances_brute(b, a).mean()
        )
        assert sspd(a, b) == pytest.approx(expected, abs=1e-9)
        assert sspd(a, b) == pytest.approx(sspd(b, a), abs=1e-12)


def test_hausdorff_outlier_dominates():
    a = np.array([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (2.0, 7.0)])
    b = np.array([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)])
    assert hausdorff(a, b) == pytest.approx(7.0)


def test_hausdorff_matches_brute_force(rng):
    for _ in range(10):
        a = np.cumsum(rng.uniform(-1, 1, size=(15, 2)), axis=0)
        b = np.cumsum(rng.uniform(-1, 1, size=(11, 2)), axis=0) + (1.0, -1.0)
        expected = max(
            polyline_distances_brute(a, b).max(), polyline_distances_brute(b, a).max()
        )
        assert hausdorff(a, b) == pytest.approx(expected, abs=1e-9)
        assert hausdorff(a, b) == pytest.approx(hausdorff(b, a), abs=1e-12)


def test_trajectory_metrics_rigid_invariance(rng):
    a = np.cumsum(rng.uniform(-1, 1, size=(15, 2)), axis=0)
    b = np.cumsum(rng.uniform(-1, 1, size=(11, 2)), axis=0)
    angle = 1.1
    rot = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    a2, b2 = a @ rot.T + (5.0, -3.0), b @ rot.T + (5.0, -3.0)
    assert sspd(a2, b2) == pytest.approx(sspd(a, b), abs=1e-9)
    assert hausdorff(a2, b2) == pytest.approx(hausdorff(a, b), abs=1e-9)


def test_degenerate_polyline_rejected():
    with pytest.raises(DataError):
        sspd(np.array([(0.0, 0.0)]), np.array([(0.0, 0.0), (1.0, 0.0)]))
    with pytest.raises(DataError):
        hausdorff(np.array([(0.0, 0.0)]), np.array([(0.0, 0.0), (1.0, 0.0)]))


def test_evaluate_batch_null_adversary_all_zero(corpus, idm_batches):
    efficiency, naturalness = evaluate_batch(idm_batches["null"], corpus)
    assert efficiency.collision_rate == 0.0
    assert efficiency.mean_collision_time is None
    assert efficiency.mean_relative_speed is None
    assert naturalness.kl_divergence <= 1e-4
    assert naturalness.wasserstein_distance == pytest.approx(0.0, abs=1e-12)
    assert naturalness.sspd == pytest.approx(0.0, abs=1e-12)
    assert naturalness.hausdorff == pytest.approx(0.0, abs=1e-12)


def test_evaluate_batch_counts(corpus, idm_batches):
    efficiency, _ = evaluate_batch(idm_batches["s1"], corpus)
    expected = sum(1 for r in idm_batches["s1"] if r.collision.occurred) / 20
    assert efficiency.collision_rate == pytest.approx(expected)
    assert efficiency.n_episodes == 20


def test_evaluate_batch_unmatched_scenario(corpus, idm_batches):
    with pytest.raises(DataError):
        evaluate_batch(idm_batches["s1"], corpus[:3])


def test_evaluate_empty_results(corpus):
    with pytest.raises(DataError):
        evaluate_batch([], corpus)
