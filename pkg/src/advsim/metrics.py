"""Efficiency and naturalness evaluation over batches of episode results.

Action similarity compares acceleration distributions (KL divergence,
1-Wasserstein); trajectory similarity compares paths (SSPD, Hausdorff) of the
simulated opponent against the same agent's recorded log.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import DataError, InsufficientDataError
from .geometry import points_to_polyline_distances
from .scenario import Pose, Scenario

if TYPE_CHECKING:
    from .engine import EpisodeResult

#: (bin count, low edge, high edge) for acceleration histograms, m/s^2.
DEFAULT_ACCEL_BINS = (50, -8.0, 8.0)
KL_SMOOTHING = 1e-6


@dataclass(frozen=True)
class EfficiencyReport:
    collision_rate: float
    mean_collision_time: float | None
    mean_relative_speed: float | None
    mean_generation_time: float
    n_episodes: int = 0
    n_valid: int = 0
    n_collisions: int = 0


@dataclass(frozen=True)
class NaturalnessReport:
    kl_divergence: float | None
    wasserstein_distance: float | None
    sspd: float | None
    hausdorff: float | None


def acceleration_series(track: Sequence[Pose]) -> list[float]:
    """Central-difference acceleration of the scalar speed channel."""
    if len(track) < 3:
        raise InsufficientDataError("acceleration series needs >= 3 poses")
    out = []
    for prev, _, nxt in zip(track, track[1:], track[2:]):
        out.append((nxt.speed - prev.speed) / (nxt.t - prev.t))
    return out


def kl_divergence(
    sample_p: Sequence[float],
    sample_q: Sequence[float],
    bins: tuple[int, float, float] = DEFAULT_ACCEL_BINS,
) -> float:
    """Binned KL(p || q) with additive smoothing.

    Both samples share the given bin edges; values outside the range are
    clipped into the edge bins so no mass is dropped.
    """
    if len(sample_p) == 0 or len(sample_q) == 0:
        raise DataError("empty sample")
    n_bins, lo, hi = bins
    edges = np.linspace(lo, hi, n_bins + 1)
    p_hist, _ = np.histogram(np.clip(sample_p, lo, hi), bins=edges)
    q_hist, _ = np.histogram(np.clip(sample_q, lo, hi), bins=edges)
    p = p_hist.astype(float) + KL_SMOOTHING
    q = q_hist.astype(float) + KL_SMOOTHING
    p /= p.sum()
    q /= q.sum()
    return float(np.sum(p * np.log(p / q)))


def wasserstein_1d(sample_p: Sequence[float], sample_q: Sequence[float]) -> float:
    """Exact empirical 1-Wasserstein distance via CDF integration."""
    if len(sample_p) == 0 or len(sample_q) == 0:
        raise DataError("empty sample")
    u = np.sort(np.asarray(sample_p, dtype=float))
    v = np.sort(np.asarray(sample_q, dtype=float))
    grid = np.sort(np.concatenate([u, v]))
    deltas = np.diff(grid)
    u_cdf = np.searchsorted(u, grid[:-1], side="right") / len(u)
    v_cdf = np.searchsorted(v, grid[:-1], side="right") / len(v)
    return float(np.sum(np.abs(u_cdf - v_cdf) * deltas))


def _as_polyline(traj) -> np.ndarray:
    pts = np.asarray(traj, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
        raise DataError("degenerate polyline (need >= 2 planar points)")
    return pts


def sspd(traj_a, traj_b) -> float:
    """Symmetric segment-path distance between two polylines (meters)."""
    a = _as_polyline(traj_a)
    b = _as_polyline(traj_b)
    d_ab = points_to_polyline_distances(a, b).mean()
    d_ba = points_to_polyline_distances(b, a).mean()
    return float(0.5 * (d_ab + d_ba))


def hausdorff(traj_a, traj_b) -> float:
    """Symmetric Hausdorff distance between two polylines (meters)."""
    a = _as_polyline(traj_a)
    b = _as_polyline(traj_b)
    return float(
        max(
            points_to_polyline_distances(a, b).max(),
            points_to_polyline_distances(b, a).max(),
        )
    )


def _mean_or_none(values: list[float]) -> float | None:
    return float(np.mean(values)) if values else None


def track_xy(track: Sequence[Pose]) -> np.ndarray:
    return np.array([(p.x, p.y) for p in track], dtype=float)


def evaluate_batch(
    results: Sequence["EpisodeResult"],
    reference: Sequence[Scenario],
    bins: tuple[int, float, float] = DEFAULT_ACCEL_BINS,
) -> tuple[EfficiencyReport, NaturalnessReport]:
    """Aggregate efficiency and naturalness over a batch.

    Each result is paired with its source scenario by scenario_id. The
    naturalness reference is the opponent's own logged track clipped to the
    simulated time span; accelerations are pooled across the batch while
    SSPD/Hausdorff are averaged per scenario.
    """
    if not results:
        raise DataError("empty result set")
    by_id = {s.scenario_id: s for s in reference}
    valid = []
    for r in results:
        if r.scenario_id not in by_id:
            raise DataError(f"no reference scenario for result {r.scenario_id!r}")
        if not r.invalid:
            valid.append((r, by_id[r.scenario_id]))

    collision_times = []
    collision_speeds = []
    gen_times = []
    sim_accels: list[float] = []
    log_accels: list[float] = []
    sspd_values = []
    hausdorff_values = []
    n_collisions = 0
    for r, sc in valid:
        gen_times.append(r.generation_time)
        if r.collision.occurred:
            n_collisions += 1
            collision_times.append(r.collision.time)
            collision_speeds.append(r.collision.relative_speed)
        log_track = sc.track(r.opponent_id)
        sim = list(r.ov_track)
        if not sim:
            continue
        t_lo, t_hi = sim[0].t, sim[-1].t
        tol = sc.dt * 0.5
        log = [p for p in log_track.states if t_lo - tol <= p.t <= t_hi + tol]
        if len(sim) >= 3 and len(log) >= 3:
            sim_accels.extend(acceleration_series(sim))
            log_accels.extend(acceleration_series(log))
        if len(sim) >= 2 and len(log) >= 2:
            sspd_values.append(sspd(track_xy(sim), track_xy(log)))
            hausdorff_values.append(hausdorff(track_xy(sim), track_xy(log)))

    efficiency = EfficiencyReport(
        collision_rate=n_collisions / len(valid) if valid else 0.0,
        mean_collision_time=_mean_or_none(collision_times),
        mean_relative_speed=_mean_or_none(collision_speeds),
        mean_generation_time=float(np.mean(gen_times)) if gen_times else 0.0,
        n_episodes=len(results),
        n_valid=len(valid),
        n_collisions=n_collisions,
    )
    naturalness = NaturalnessReport(
        kl_divergence=(
            kl_divergence(sim_accels, log_accels, bins) if sim_accels and log_accels else None
        ),
        wasserstein_distance=(
            wasserstein_1d(sim_accels, log_accels) if sim_accels and log_accels else None
        ),
        sspd=_mean_or_none(sspd_values),
        hausdorff=_mean_or_none(hausdorff_values),
    )
    return efficiency, naturalness
