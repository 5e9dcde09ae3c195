"""Scored trajectory hypothesis sets behind a pluggable predictor interface.

Marginal prediction samples goals on a lane-centerline lattice inside the
kinematic reach envelope (plus hard-brake and constant-velocity candidates)
and drives a time-parameterized quintic to each goal, arriving at a speed-
consistent time and holding course afterwards. Conditional prediction runs
the same sampler for the ego, adds evasive candidates (hard brake, lateral
offsets), and reweights each candidate by exp(-lambda * overlap) with the
conditioning opponent trajectory before renormalizing. Everything is
deterministic given inputs and config.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError, InsufficientDataError, ScenarioValidationError
from .geometry import (
    interpolate_along_polyline,
    overlap_count,
    points_to_polyline_distances,
    polyline_arclength,
    project_onto_polyline,
)
from .scenario import Pose, Scenario, TrajectoryHypothesis, norm_heading

DEFAULT_OV_SIZE = (4.5, 2.0)


@dataclass(frozen=True)
class PredictorConfig:
    n_hypotheses: int = 6
    goal_spacing: float = 5.0          # m between lattice goals along a lane
    max_accel: float = 4.0             # m/s^2, longitudinal bound
    max_lat_accel: float = 4.0         # m/s^2, lateral bound
    max_yaw_rate: float = 1.2          # rad/s
    w_lane: float = 1.0                # weight on -mean lane offset
    w_heading: float = 1.0             # weight on -|heading error| at the goal
    w_accel: float = 0.25              # weight on -peak |acceleration|
    score_temperature: float = 1.0
    reaction_sensitivity: float = 0.05  # lambda >= 0, conditional only
    brake_decel: float = 4.0
    evasive_offset: float = 2.0        # m, lateral shift of evasive candidates
    evasive_blend_time: float = 3.0    # s to reach the full lateral offset
    max_goals: int = 32                # lattice size guard, per-lane subsampled

    def __post_init__(self):
        if self.n_hypotheses < 1:
            raise DataError("n_hypotheses must be >= 1")
        if self.reaction_sensitivity < 0:
            raise DataError("reaction_sensitivity must be >= 0")
        if self.goal_spacing <= 0 or self.score_temperature <= 0:
            raise DataError("goal_spacing and score_temperature must be > 0")


@dataclass(frozen=True)
class HypothesisSet:
    """Trajectory hypotheses for one agent, probabilities summing to one."""

    hypotheses: tuple[TrajectoryHypothesis, ...]
    kinds: tuple[str, ...] = ()
    fallback: bool = False

    def __post_init__(self):
        if not self.hypotheses:
            raise ScenarioValidationError("empty hypothesis set")
        total = sum(h.probability for h in self.hypotheses)
        if abs(total - 1.0) > 1e-9:
            raise ScenarioValidationError(f"probabilities sum to {total}, not 1")
        if self.kinds and len(self.kinds) != len(self.hypotheses):
            raise ScenarioValidationError("kinds/hypotheses length mismatch")

    @property
    def probabilities(self) -> tuple[float, ...]:
        return tuple(h.probability for h in self.hypotheses)


# --- candidate construction --------------------------------------------------


def _quintic_coeffs(p0, v0, a0, p1, v1, a1, horizon):
    t2 = horizon * horizon
    c0, c1, c2 = p0, v0, 0.5 * a0
    c3 = (20 * (p1 - p0) - (8 * v1 + 12 * v0) * horizon - (3 * a0 - a1) * t2) / (
        2 * t2 * horizon
    )
    c4 = (-30 * (p1 - p0) + (14 * v1 + 16 * v0) * horizon + (3 * a0 - 2 * a1) * t2) / (
        2 * t2 * t2
    )
    c5 = (12 * (p1 - p0) - 6 * (v1 + v0) * horizon + (a1 - a0) * t2) / (
        2 * t2 * t2 * horizon
    )
    return np.array([c0, c1, c2, c3, c4, c5])


def _poses_from_xy(cur: Pose, tau, xs, ys, vxs, vys) -> tuple[Pose, ...]:
    poses = []
    prev_heading = cur.heading
    for k in range(len(tau)):
        speed = math.hypot(vxs[k], vys[k])
        heading = math.atan2(vys[k], vxs[k]) if speed > 1e-6 else prev_heading
        poses.append(Pose(t=cur.t + tau[k], x=xs[k], y=ys[k], heading=heading, speed=speed))
        prev_heading = heading
    return tuple(poses)


def _grid(horizon: float, dt: float) -> np.ndarray:
    steps = round(horizon / dt)
    if steps < 1:
        raise DataError("future horizon shorter than one step")
    return np.arange(1, steps + 1) * dt


def _quintic_candidate(cur: Pose, acc0, goal, arrive: float, horizon: float, dt: float):
    """Quintic reaching the goal at time `arrive`, then holding course.

    Starts from the agent's observed acceleration so that successive replans
    compose one maneuver instead of restarting it, and after arrival continues
    at the goal speed along the goal heading (standing still for a zero goal
    speed). Maneuvers therefore complete mid-horizon instead of being diluted
    over the whole prediction window.
    """
    gx, gy, gheading, gspeed = goal
    vx0, vy0 = cur.velocity()
    gvx = gspeed * math.cos(gheading)
    gvy = gspeed * math.sin(gheading)
    cx = _quintic_coeffs(cur.x, vx0, acc0[0], gx, gvx, 0.0, arrive)
    cy = _quintic_coeffs(cur.y, vy0, acc0[1], gy, gvy, 0.0, arrive)
    tau = _grid(horizon, dt)
    inside = tau <= arrive
    t_in = tau[inside]
    powers = np.vander(t_in, 6, increasing=True)
    dpowers = powers[:, :5] * np.arange(1, 6)
    xs = np.concatenate([powers @ cx, gx + gvx * (tau[~inside] - arrive)])
    ys = np.concatenate([powers @ cy, gy + gvy * (tau[~inside] - arrive)])
    vxs = np.concatenate([dpowers @ cx[1:], np.full((~inside).sum(), gvx)])
    vys = np.concatenate([dpowers @ cy[1:], np.full((~inside).sum(), gvy)])
    return _poses_from_xy(cur, tau, xs, ys, vxs, vys)


def _constant_velocity_candidate(cur: Pose, horizon: float, dt: float):
    tau = _grid(horizon, dt)
    vx, vy = cur.velocity()
    return tuple(
        Pose(t=cur.t + t, x=cur.x + vx * t, y=cur.y + vy * t, heading=cur.heading, speed=cur.speed)
        for t in tau
    )


def _hard_brake_candidate(cur: Pose, decel: float, horizon: float, dt: float):
    tau = _grid(horizon, dt)
    t_stop = cur.speed / decel if decel > 0 else math.inf
    poses = []
    for t in tau:
        if t < t_stop:
            dist = cur.speed * t - 0.5 * decel * t * t
            speed = cur.speed - decel * t
        else:
            dist = 0.5 * cur.speed * t_stop if math.isfinite(t_stop) else cur.speed * t
            speed = 0.0
        poses.append(
            Pose(
                t=cur.t + t,
                x=cur.x + dist * math.cos(cur.heading),
                y=cur.y + dist * math.sin(cur.heading),
                heading=cur.heading,
                speed=speed,
            )
        )
    return tuple(poses)


def _lateral_offset_candidate(cur: Pose, offset: float, blend_time: float, horizon: float, dt: float):
    tau = _grid(horizon, dt)
    tb = min(blend_time, horizon)
    # Min-jerk scalar blend 0 -> offset over tb, then hold.
    u = np.clip(tau / tb, 0.0, 1.0)
    q = offset * (10 * u**3 - 15 * u**4 + 6 * u**5)
    dq = offset * (30 * u**2 - 60 * u**3 + 30 * u**4) / tb
    vx, vy = cur.velocity()
    px = -math.sin(cur.heading)
    py = math.cos(cur.heading)
    xs = cur.x + vx * tau + q * px
    ys = cur.y + vy * tau + q * py
    vxs = vx + dq * px
    vys = vy + dq * py
    return _poses_from_xy(cur, tau, xs, ys, vxs, vys)


def _observed_accel(states: Sequence[Pose], dt: float, cfg: PredictorConfig):
    """Acceleration vector from the last two observed states, clipped to bounds."""
    prev, cur = states[-2], states[-1]
    pvx, pvy = prev.velocity()
    cvx, cvy = cur.velocity()
    step = cur.t - prev.t if cur.t > prev.t else dt
    ax = (cvx - pvx) / step
    ay = (cvy - pvy) / step
    cap = math.hypot(cfg.max_accel, cfg.max_lat_accel)
    norm = math.hypot(ax, ay)
    if norm > cap:
        ax, ay = ax * cap / norm, ay * cap / norm
    return ax, ay


def _feasible(cur: Pose, poses: Sequence[Pose], cfg: PredictorConfig, dt: float) -> bool:
    chain = (cur, *poses)
    tol = 1e-6
    for a, b in zip(chain, chain[1:]):
        vax, vay = a.velocity()
        vbx, vby = b.velocity()
        ax = (vbx - vax) / dt
        ay = (vby - vay) / dt
        c, s = math.cos(a.heading), math.sin(a.heading)
        a_long = ax * c + ay * s
        a_lat = -ax * s + ay * c
        if abs(a_long) > cfg.max_accel + tol or abs(a_lat) > cfg.max_lat_accel + tol:
            return False
        if abs(norm_heading(b.heading - a.heading)) > cfg.max_yaw_rate * dt + tol:
            return False
    return True


def _lattice_goals(scenario_map, cur: Pose, cfg: PredictorConfig, horizon: float):
    """Goal positions (lane idx, arc s, x, y, tangent heading) within reach.

    Positions are subsampled geometrically along each lane: dense close to the
    agent, where interactions happen, sparse toward the reach limit.
    """
    reach = cur.speed * horizon + 0.5 * cfg.max_accel * horizon * horizon
    n_lanes = len(scenario_map.lane_centerlines)
    per_lane_cap = max(3, cfg.max_goals // n_lanes) if n_lanes else 0
    goals = []
    seen = set()
    for li, lane in enumerate(scenario_map.lane_centerlines):
        arr = np.asarray(lane, dtype=float)
        total = polyline_arclength(arr)[-1]
        s_proj, lateral = project_onto_polyline((cur.x, cur.y), arr)
        if abs(lateral) > reach:
            continue
        lane_goals = []
        s = s_proj
        while s <= min(total, s_proj + reach) + 1e-9:
            x, y, heading = interpolate_along_polyline(arr, s)
            dist = math.hypot(x - cur.x, y - cur.y)
            s += cfg.goal_spacing
            if dist > reach or dist < 0.5:
                continue
            key = (round(x * 100), round(y * 100))
            if key in seen:
                continue
            seen.add(key)
            lane_goals.append((li, s - cfg.goal_spacing, x, y, heading))
        if len(lane_goals) > per_lane_cap:
            idx = np.unique(
                (np.geomspace(1, len(lane_goals), per_lane_cap) - 1).round().astype(int)
            )
            lane_goals = [lane_goals[i] for i in idx]
        goals.extend(lane_goals)
    return goals


#: Goal arrival times as fractions of the future horizon; one candidate per
#: feasible (goal, fraction) pair, goal speed from the mean-speed identity
#: v_goal = 2 d / t_arrive - v_now.
ARRIVAL_FRACTIONS = (0.25, 0.5, 1.0)


def _candidate_scores(
    candidates, scenario_map, cfg: PredictorConfig, dt: float
) -> np.ndarray:
    """Base score per candidate: lane adherence, heading alignment, smoothness."""
    lanes = [np.asarray(l, dtype=float) for l in scenario_map.lane_centerlines]
    n = len(candidates)
    steps = len(candidates[0])
    mean_offset = np.zeros(n)
    heading_err = np.zeros(n)
    if lanes:
        pts = np.array([(p.x, p.y) for poses in candidates for p in poses])
        per_lane = np.stack([points_to_polyline_distances(pts, lane) for lane in lanes])
        mean_offset = per_lane.min(axis=0).reshape(n, steps).mean(axis=1)
        nearest = per_lane[:, steps - 1 :: steps].argmin(axis=0)
        for i, poses in enumerate(candidates):
            last = poses[-1]
            lane = lanes[nearest[i]]
            s_end, _ = project_onto_polyline((last.x, last.y), lane)
            _, _, tangent = interpolate_along_polyline(lane, s_end)
            heading_err[i] = abs(norm_heading(last.heading - tangent))
    peak_acc = np.zeros(n)
    for i, poses in enumerate(candidates):
        vels = np.array([p.velocity() for p in poses])
        acc = np.diff(vels, axis=0) / dt
        if len(acc):
            peak_acc[i] = np.hypot(acc[:, 0], acc[:, 1]).max()
    return -cfg.w_lane * mean_offset - cfg.w_heading * heading_err - cfg.w_accel * peak_acc


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    p = np.exp(z)
    p /= p.sum()
    return p


def _stratified_keep(kinds, lattice_scores, budget: int) -> list[int]:
    """Round-robin across lanes (best lane first), by score within each lane."""
    by_lane: dict[str, list[int]] = {}
    for i, kind in enumerate(kinds):
        by_lane.setdefault(kind.split(":")[1], []).append(i)
    queues = sorted(
        (sorted(ids, key=lambda i: -lattice_scores[i]) for ids in by_lane.values()),
        key=lambda q: -lattice_scores[q[0]],
    )
    keep: list[int] = []
    while len(keep) < budget and queues:
        next_round = []
        for q in queues:
            keep.append(q.pop(0))
            if len(keep) == budget:
                break
            if q:
                next_round.append(q)
        queues = next_round
    return sorted(keep)


@dataclass(frozen=True)
class _Assembly:
    kinds: tuple[str, ...]
    candidates: tuple[tuple[Pose, ...], ...]
    scores: np.ndarray
    fallback: bool


def _assemble_candidates(
    obs: Scenario, agent: str, cfg: PredictorConfig, include_evasive: bool
) -> _Assembly:
    """Deterministic candidate set: specials first, then lane-stratified goals."""
    try:
        track = obs.track(agent)
    except KeyError:
        raise DataError(f"unknown agent_id {agent!r}") from None
    if len(track.states) < 2:
        raise InsufficientDataError(f"agent {agent!r} has fewer than 2 history states")
    cur = track.states[-1]
    horizon = obs.future_horizon
    dt = obs.dt
    acc0 = _observed_accel(track.states, dt, cfg)

    kinds = ["brake", "cv"]
    candidates = [
        _hard_brake_candidate(cur, min(cfg.brake_decel, cfg.max_accel), horizon, dt),
        _constant_velocity_candidate(cur, horizon, dt),
    ]
    if include_evasive and cfg.evasive_offset > 0:
        for sign, name in ((1.0, "offset_left"), (-1.0, "offset_right")):
            poses = _lateral_offset_candidate(
                cur, sign * cfg.evasive_offset, cfg.evasive_blend_time, horizon, dt
            )
            if _feasible(cur, poses, cfg, dt):
                kinds.append(name)
                candidates.append(poses)

    lattice_kinds = []
    lattice = []
    for li, s, x, y, heading in _lattice_goals(obs.map, cur, cfg, horizon):
        dist = math.hypot(x - cur.x, y - cur.y)
        seen_speeds = set()
        for fraction in ARRIVAL_FRACTIONS:
            arrive = max(fraction * horizon, 1.0)
            speed = max(0.0, 2.0 * dist / arrive - cur.speed)
            speed_key = round(speed, 2)
            if speed_key in seen_speeds:
                continue
            seen_speeds.add(speed_key)
            poses = _quintic_candidate(cur, acc0, (x, y, heading, speed), arrive, horizon, dt)
            if _feasible(cur, poses, cfg, dt):
                lattice_kinds.append(f"goal:{li}:{s:.1f}:{arrive:.1f}")
                lattice.append(poses)
    fallback = not lattice

    n = cfg.n_hypotheses
    if lattice:
        budget = max(0, n - len(candidates))
        if budget and len(lattice) > budget:
            lat_scores = _candidate_scores(lattice, obs.map, cfg, dt)
            keep = _stratified_keep(lattice_kinds, lat_scores, budget)
            lattice_kinds = [lattice_kinds[i] for i in keep]
            lattice = [lattice[i] for i in keep]
        kinds += lattice_kinds
        candidates += lattice
    if len(candidates) > n:
        scores = _candidate_scores(candidates, obs.map, cfg, dt)
        keep = np.sort(np.argsort(-scores, kind="stable")[:n])
        kinds = [kinds[i] for i in keep]
        candidates = [candidates[i] for i in keep]

    return _Assembly(
        kinds=tuple(kinds),
        candidates=tuple(candidates),
        scores=_candidate_scores(candidates, obs.map, cfg, dt),
        fallback=fallback,
    )


def _to_set(assembly: _Assembly, probs: np.ndarray) -> HypothesisSet:
    probs = np.asarray(probs, dtype=float)
    probs = probs / probs.sum()
    return HypothesisSet(
        hypotheses=tuple(
            TrajectoryHypothesis(poses=poses, probability=float(p))
            for poses, p in zip(assembly.candidates, probs)
        ),
        kinds=assembly.kinds,
        fallback=assembly.fallback,
    )


def predict_marginal(
    obs: Scenario,
    agent: str,
    cfg: PredictorConfig,
    include_evasive: bool = False,
) -> HypothesisSet:
    """Scored future trajectories for one agent from its observation history."""
    assembly = _assemble_candidates(obs, agent, cfg, include_evasive)
    return _to_set(assembly, _softmax(assembly.scores / cfg.score_temperature))


class ConditionalPredictor:
    """Reactive ego prediction with the candidate set assembled once.

    Conditioning on different opponent trajectories only changes the
    reweighting, so a replan that sweeps many opponent hypotheses can reuse
    one assembly; `predict(y_ov)` matches predict_conditional exactly.
    """

    def __init__(
        self,
        obs: Scenario,
        ego: str,
        cfg: PredictorConfig,
        ov_size: tuple[float, float] = DEFAULT_OV_SIZE,
    ):
        self.cfg = cfg
        self.ov_size = ov_size
        ego_track = obs.track(ego)
        self.ego_size = (ego_track.length, ego_track.width)
        self.assembly = _assemble_candidates(obs, ego, cfg, True)
        self._logits = self.assembly.scores / cfg.score_temperature

    def predict(self, y_ov: TrajectoryHypothesis) -> HypothesisSet:
        logits = self._logits
        if self.cfg.reaction_sensitivity > 0:
            overlaps = np.array(
                [
                    overlap_count(
                        TrajectoryHypothesis(poses=poses, probability=1.0),
                        y_ov,
                        self.ego_size,
                        self.ov_size,
                    )
                    for poses in self.assembly.candidates
                ],
                dtype=float,
            )
            logits = logits - self.cfg.reaction_sensitivity * overlaps
        return _to_set(self.assembly, _softmax(logits))


def predict_conditional(
    obs: Scenario,
    ego: str,
    y_ov: TrajectoryHypothesis,
    cfg: PredictorConfig,
    ov_size: tuple[float, float] = DEFAULT_OV_SIZE,
) -> HypothesisSet:
    """Reactive ego futures conditioned on one opponent trajectory.

    Candidate k's log-score is shifted by -lambda * overlap_k, where overlap_k
    counts the timestamps at which the candidate's box intersects y_ov's box;
    lambda = 0 therefore reduces exactly to the marginal distribution over the
    same candidate set.
    """
    return ConditionalPredictor(obs, ego, cfg, ov_size).predict(y_ov)
