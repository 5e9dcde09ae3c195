"""Ego policies used inside the closed loop: log replay and IDM car following.

The IDM ego keeps the logged route geometrically (arc-length tracking of the
recorded path) and modulates speed only; the leader is the nearest agent
ahead inside a lateral corridor around that path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ConfigError, EndOfLogError, PathLostError
from .geometry import interpolate_along_polyline, project_onto_polyline
from .scenario import Pose, Scenario


@dataclass(frozen=True)
class IdmParams:
    desired_speed: float | None = None  # m/s; None -> mean logged ego speed
    time_headway: float = 1.5           # s
    min_gap: float = 2.0                # m
    accel: float = 2.0                  # m/s^2
    decel: float = 2.0                  # m/s^2, comfortable
    delta: float = 4.0
    max_brake: float = 4.0              # m/s^2, emergency clamp
    corridor: float = 3.0               # m, leader-search half width
    path_lost_threshold: float = 6.0    # m

    def __post_init__(self):
        positives = (
            self.time_headway,
            self.min_gap,
            self.accel,
            self.decel,
            self.delta,
            self.max_brake,
            self.corridor,
        )
        if any(v <= 0 for v in positives):
            raise ConfigError("IDM parameters must be > 0")
        if self.desired_speed is not None and self.desired_speed <= 0:
            raise ConfigError("desired_speed must be > 0")


@dataclass(frozen=True)
class PlannerKind:
    kind: str = "replay"  # replay | idm
    idm: IdmParams = field(default_factory=IdmParams)

    def __post_init__(self):
        if self.kind not in ("replay", "idm"):
            raise ConfigError(f"unknown planner kind {self.kind!r}")


def compute_idm_accel(
    v: float,
    desired_speed: float,
    params: IdmParams,
    gap: float | None = None,
    leader_speed: float | None = None,
) -> float:
    """IDM acceleration, clamped to [-max_brake, accel].

    With no leader the interaction term is zero. gap is bumper-to-bumper.
    """
    free = (v / desired_speed) ** params.delta if desired_speed > 0 else 0.0
    interaction = 0.0
    if gap is not None:
        gap = max(gap, 0.01)
        s_star = params.min_gap + v * params.time_headway + v * (
            v - (leader_speed or 0.0)
        ) / (2.0 * math.sqrt(params.accel * params.decel))
        interaction = (s_star / gap) ** 2
    accel = params.accel * (1.0 - free - interaction)
    return min(max(accel, -params.max_brake), params.accel)


def replay_step(s: Scenario, t_now: float) -> Pose:
    """Logged ego pose at t_now + dt, verbatim."""
    pose = s.ego_track.state_at(t_now + s.dt, s.dt)
    if pose is None:
        raise EndOfLogError(f"ego log ends before t={t_now + s.dt}")
    return pose


class IdmPlanner:
    """Follows the logged ego route, reacting longitudinally via IDM."""

    def __init__(self, scenario: Scenario, params: IdmParams = IdmParams()):
        self.params = params
        self.dt = scenario.dt
        self.ego_id = scenario.ego_id
        ego = scenario.ego_track
        self.ego_length = ego.length
        self.agent_lengths = {tr.agent_id: tr.length for tr in scenario.tracks}
        if params.desired_speed is not None:
            self.desired_speed = params.desired_speed
        else:
            self.desired_speed = max(
                float(np.mean([p.speed for p in ego.states])), 0.1
            )
        self.path = self._reference_path(ego)

    @staticmethod
    def _reference_path(ego) -> np.ndarray:
        points = [(ego.states[0].x, ego.states[0].y)]
        for p in ego.states[1:]:
            lx, ly = points[-1]
            if math.hypot(p.x - lx, p.y - ly) > 1e-6:
                points.append((p.x, p.y))
        if len(points) < 2:
            # Stationary log: degenerate route, extend along the last heading.
            p0 = ego.states[0]
            points.append(
                (p0.x + math.cos(p0.heading), p0.y + math.sin(p0.heading))
            )
        return np.asarray(points, dtype=float)

    def _leader(self, s_ego: float, current: Mapping[str, Pose]):
        best = None
        for agent_id, pose in current.items():
            if agent_id == self.ego_id:
                continue
            s_i, lat_i = project_onto_polyline((pose.x, pose.y), self.path)
            if abs(lat_i) > self.params.corridor or s_i <= s_ego + 1e-6:
                continue
            if best is None or s_i < best[0]:
                best = (s_i, pose, self.agent_lengths.get(agent_id, 4.5))
        return best

    def step(self, current: Mapping[str, Pose], t_now: float) -> Pose:
        """Advance the ego one dt along the reference path."""
        ego_pose = current[self.ego_id]
        s_ego, lateral = project_onto_polyline((ego_pose.x, ego_pose.y), self.path)
        if abs(lateral) > self.params.path_lost_threshold:
            raise PathLostError(
                f"ego {lateral:.2f} m off the reference path at t={t_now}"
            )
        v = ego_pose.speed
        leader = self._leader(s_ego, current)
        if leader is None:
            accel = compute_idm_accel(v, self.desired_speed, self.params)
        else:
            s_leader, leader_pose, leader_length = leader
            gap = (s_leader - s_ego) - 0.5 * (leader_length + self.ego_length)
            accel = compute_idm_accel(
                v, self.desired_speed, self.params, gap=gap, leader_speed=leader_pose.speed
            )
        v_next = max(0.0, v + accel * self.dt)
        s_next = s_ego + v_next * self.dt
        x, y, heading = interpolate_along_polyline(self.path, s_next)
        if v_next <= 1e-9:
            heading = ego_pose.heading
        return Pose(t=t_now + self.dt, x=x, y=y, heading=heading, speed=v_next)


def idm_step(s: Scenario, t_now: float, params: IdmParams = IdmParams()) -> Pose:
    """One IDM step from the scenario's states at t_now (contract form)."""
    planner = IdmPlanner(s, params)
    current = {}
    for tr in s.tracks:
        pose = tr.state_at(t_now, s.dt)
        if pose is not None:
            current[tr.agent_id] = pose
    if s.ego_id not in current:
        raise EndOfLogError(f"no ego state at t={t_now}")
    return planner.step(current, t_now)
