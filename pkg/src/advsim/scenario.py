"""World-state data model: map, agent tracks, trajectories, scenario files.

A scenario is a recorded traffic episode sampled on a fixed dt grid: a map
(lane centerlines + drivable polygons), a set of agent tracks, and one agent
designated as the ego vehicle. Values are immutable after construction and
safe to share across threads.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    EmptyHistoryError,
    ScenarioFormatError,
    ScenarioValidationError,
)

GRID_TOL = 1e-6


def norm_heading(h: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    h = math.remainder(h, 2.0 * math.pi)
    if h <= -math.pi:
        h += 2.0 * math.pi
    return h


def _require_finite(value: float, what: str, agent_id: str = "", t: float | None = None):
    if not math.isfinite(value):
        where = f" agent_id={agent_id}" if agent_id else ""
        when = f" t={t}" if t is not None else ""
        raise ScenarioValidationError(f"non-finite {what}{where}{when}")


@dataclass(frozen=True)
class Pose:
    """Planar state of one agent at one timestamp."""

    t: float
    x: float
    y: float
    heading: float
    speed: float

    def __post_init__(self):
        for name in ("t", "x", "y", "heading", "speed"):
            _require_finite(getattr(self, name), name, t=self.t)
        if self.speed < 0.0:
            raise ScenarioValidationError(f"negative speed {self.speed} at t={self.t}")
        object.__setattr__(self, "heading", norm_heading(self.heading))

    def velocity(self) -> tuple[float, float]:
        """Velocity vector from the scalar speed along the heading."""
        return (self.speed * math.cos(self.heading), self.speed * math.sin(self.heading))


@dataclass(frozen=True)
class AgentTrack:
    agent_id: str
    length: float
    width: float
    states: tuple[Pose, ...]

    def __post_init__(self):
        if not self.agent_id:
            raise ScenarioValidationError("empty agent_id")
        if self.length <= 0 or self.width <= 0:
            raise ScenarioValidationError(
                f"non-positive extent for agent_id={self.agent_id}"
            )
        if not self.states:
            raise ScenarioValidationError(f"empty track for agent_id={self.agent_id}")
        prev = None
        for p in self.states:
            if prev is not None and p.t <= prev:
                raise ScenarioValidationError(
                    f"non-increasing timestamps for agent_id={self.agent_id} at t={p.t}"
                )
            prev = p.t

    @property
    def t_first(self) -> float:
        return self.states[0].t

    @property
    def t_last(self) -> float:
        return self.states[-1].t

    def state_at(self, t: float, dt: float) -> Pose | None:
        """Grid lookup; None when t falls outside the track."""
        k = round((t - self.states[0].t) / dt)
        if k < 0 or k >= len(self.states):
            return None
        pose = self.states[k]
        if abs(pose.t - t) > dt * 0.5:
            return None
        return pose


@dataclass(frozen=True)
class MapGraph:
    """Lane centerlines (directed polylines) and drivable-area polygons, in meters."""

    lane_centerlines: tuple[tuple[tuple[float, float], ...], ...]
    drivable_polygons: tuple[tuple[tuple[float, float], ...], ...] = ()

    def __post_init__(self):
        for i, line in enumerate(self.lane_centerlines):
            _check_polyline(line, f"lane[{i}]")
        for i, poly in enumerate(self.drivable_polygons):
            _check_polyline(poly, f"drivable[{i}]", closed=True)
            if _self_intersects(poly):
                raise ScenarioValidationError(f"drivable[{i}] is self-intersecting")


def _check_polyline(line, name: str, closed: bool = False):
    minimum = 3 if closed else 2
    if len(line) < minimum:
        raise ScenarioValidationError(f"{name} has fewer than {minimum} points")
    for x, y in line:
        _require_finite(x, f"{name} x")
        _require_finite(y, f"{name} y")
    for (x0, y0), (x1, y1) in zip(line, line[1:]):
        if x0 == x1 and y0 == y1:
            raise ScenarioValidationError(f"{name} has consecutive duplicate points")


def _segments_cross(a0, a1, b0, b1) -> bool:
    def orient(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    d1 = orient(b0, b1, a0)
    d2 = orient(b0, b1, a1)
    d3 = orient(a0, a1, b0)
    d4 = orient(a0, a1, b1)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def _self_intersects(poly) -> bool:
    # Brute force over non-adjacent edge pairs; polygons here are small.
    pts = list(poly)
    if pts[0] == pts[-1]:
        pts = pts[:-1]
    n = len(pts)
    edges = [(pts[i], pts[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_cross(*edges[i], *edges[j]):
                return True
    return False


@dataclass(frozen=True)
class Scenario:
    map: MapGraph
    tracks: tuple[AgentTrack, ...]
    ego_id: str
    dt: float
    history_horizon: float
    future_horizon: float
    scenario_id: str = ""

    def __post_init__(self):
        if self.dt <= 0:
            raise ScenarioValidationError("dt must be > 0")
        if self.history_horizon < 0 or self.future_horizon < 0:
            raise ScenarioValidationError("horizons must be >= 0")
        ids = [tr.agent_id for tr in self.tracks]
        if len(set(ids)) != len(ids):
            raise ScenarioValidationError("duplicate agent_id")
        if ids.count(self.ego_id) != 1:
            raise ScenarioValidationError(
                f"ego_id {self.ego_id!r} does not resolve to exactly one track"
            )
        for tr in self.tracks:
            _check_on_grid(tr, self.dt)

    @property
    def ego_track(self) -> AgentTrack:
        return self.track(self.ego_id)

    def track(self, agent_id: str) -> AgentTrack:
        for tr in self.tracks:
            if tr.agent_id == agent_id:
                return tr
        raise KeyError(agent_id)

    @property
    def t_first(self) -> float:
        return min(tr.t_first for tr in self.tracks)

    @property
    def t_last(self) -> float:
        return max(tr.t_last for tr in self.tracks)


def _check_on_grid(track: AgentTrack, dt: float):
    for pose in track.states:
        k = round(pose.t / dt)
        if abs(pose.t - k * dt) > GRID_TOL:
            raise ScenarioValidationError(
                f"timestamp off the dt grid for agent_id={track.agent_id} at t={pose.t}"
            )
    for a, b in zip(track.states, track.states[1:]):
        if abs((b.t - a.t) - dt) > GRID_TOL:
            raise ScenarioValidationError(
                f"gap in track for agent_id={track.agent_id} between t={a.t} and t={b.t}"
            )


@dataclass(frozen=True)
class TrajectoryHypothesis:
    """A future pose sequence together with its normalized probability."""

    poses: tuple[Pose, ...]
    probability: float

    def __post_init__(self):
        if not self.poses:
            raise ScenarioValidationError("hypothesis with no poses")
        if not (0.0 <= self.probability <= 1.0) or not math.isfinite(self.probability):
            raise ScenarioValidationError(
                f"probability {self.probability} outside [0, 1]"
            )


# --- file ingestion -------------------------------------------------------


def _get(obj: dict, key: str, kind, where: str):
    if key not in obj:
        raise ScenarioFormatError(f"missing field '{where}{key}'")
    value = obj[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ScenarioFormatError(f"field '{where}{key}' is not a number")
        return float(value)
    if not isinstance(value, kind):
        raise ScenarioFormatError(f"field '{where}{key}' has wrong type")
    return value


def _parse_polyline(raw, where: str) -> tuple[tuple[float, float], ...]:
    if not isinstance(raw, list):
        raise ScenarioFormatError(f"field '{where}' is not a list of points")
    points = []
    for p in raw:
        if not isinstance(p, list) or len(p) != 2:
            raise ScenarioFormatError(f"field '{where}' contains a malformed point")
        points.append((float(p[0]), float(p[1])))
    return tuple(points)


def scenario_from_dict(data: dict, scenario_id: str = "") -> Scenario:
    dt = _get(data, "dt", float, "")
    history = _get(data, "history_horizon", float, "")
    future = _get(data, "future_horizon", float, "")
    ego_id = _get(data, "ego_id", str, "")
    map_obj = _get(data, "map", dict, "")
    lanes = tuple(
        _parse_polyline(raw, f"map.lanes[{i}]")
        for i, raw in enumerate(_get(map_obj, "lanes", list, "map."))
    )
    drivable = tuple(
        _parse_polyline(raw, f"map.drivable[{i}]")
        for i, raw in enumerate(map_obj.get("drivable", []))
    )
    tracks = []
    for i, raw in enumerate(_get(data, "agents", list, "")):
        if not isinstance(raw, dict):
            raise ScenarioFormatError(f"field 'agents[{i}]' is not an object")
        where = f"agents[{i}]."
        states = []
        for j, s in enumerate(_get(raw, "states", list, where)):
            if not isinstance(s, dict):
                raise ScenarioFormatError(f"field '{where}states[{j}]' is not an object")
            sw = f"{where}states[{j}]."
            states.append(
                Pose(
                    t=_get(s, "t", float, sw),
                    x=_get(s, "x", float, sw),
                    y=_get(s, "y", float, sw),
                    heading=_get(s, "heading", float, sw),
                    speed=_get(s, "speed", float, sw),
                )
            )
        tracks.append(
            AgentTrack(
                agent_id=_get(raw, "id", str, where),
                length=_get(raw, "length", float, where),
                width=_get(raw, "width", float, where),
                states=tuple(states),
            )
        )
    return Scenario(
        map=MapGraph(lane_centerlines=lanes, drivable_polygons=drivable),
        tracks=tuple(tracks),
        ego_id=ego_id,
        dt=dt,
        history_horizon=history,
        future_horizon=future,
        scenario_id=scenario_id,
    )


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "dt": s.dt,
        "history_horizon": s.history_horizon,
        "future_horizon": s.future_horizon,
        "ego_id": s.ego_id,
        "map": {
            "lanes": [[[x, y] for x, y in line] for line in s.map.lane_centerlines],
            "drivable": [[[x, y] for x, y in poly] for poly in s.map.drivable_polygons],
        },
        "agents": [
            {
                "id": tr.agent_id,
                "length": tr.length,
                "width": tr.width,
                "states": [
                    {"t": p.t, "x": p.x, "y": p.y, "heading": p.heading, "speed": p.speed}
                    for p in tr.states
                ],
            }
            for tr in s.tracks
        ],
    }


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"{path.name}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ScenarioFormatError(f"{path.name}: top level is not an object")
    return scenario_from_dict(data, scenario_id=path.stem)


def save_scenario(s: Scenario, path: str | Path):
    Path(path).write_text(
        json.dumps(scenario_to_dict(s), indent=1, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def slice_observation(s: Scenario, t_now: float) -> Scenario:
    """Clip the scenario to the observation available at t_now.

    Keeps, per track, the states in the closed window
    [t_now - history_horizon, t_now]; tracks with no state in the window are
    dropped. The map and horizons are unchanged.
    """
    tol = s.dt * 0.5
    if t_now < s.t_first - tol:
        raise EmptyHistoryError(f"t_now={t_now} precedes first sample t={s.t_first}")
    lo = t_now - s.history_horizon - tol
    hi = t_now + tol
    kept = []
    for tr in s.tracks:
        states = tuple(p for p in tr.states if lo <= p.t <= hi)
        if states:
            kept.append(replace(tr, states=states))
    if not any(tr.agent_id == s.ego_id for tr in kept):
        raise EmptyHistoryError(f"ego track has no states at or before t_now={t_now}")
    return replace(s, tracks=tuple(kept))


# --- dataset converter stub -------------------------------------------------

#: Field mapping applied by :func:`motion_record_to_scenario_dict`. The source
#: layout mirrors a decoded Waymo-style motion record; only synthetic fixtures
#: of that layout ship with this repository.
MOTION_RECORD_MAPPING = {
    "timestamps_seconds": "per-state 't' (must already be uniform)",
    "sdc_track_index": "agents[i] -> ego_id",
    "tracks[].id": "agents[].id",
    "tracks[].length/width": "agents[].length/width",
    "tracks[].center_x/center_y": "agents[].states[].x/y",
    "tracks[].heading": "agents[].states[].heading",
    "tracks[].velocity_x/velocity_y": "agents[].states[].speed = hypot(vx, vy)",
    "tracks[].valid": "invalid states are dropped from the head/tail",
    "map_features[].polyline": "map.lanes[]",
}


def motion_record_to_scenario_dict(
    record: dict, history_horizon: float = 1.0
) -> dict:
    """Convert a decoded motion-dataset record into the scenario JSON schema.

    Implements :data:`MOTION_RECORD_MAPPING` for already-decoded dict records;
    full-scale dataset ingestion (proto parsing, sharding) is out of scope.
    """
    ts = [float(t) for t in record["timestamps_seconds"]]
    if len(ts) < 2:
        raise ScenarioFormatError("record has fewer than two timestamps")
    dt = ts[1] - ts[0]
    agents = []
    for track in record["tracks"]:
        states = []
        for i, valid in enumerate(track["valid"]):
            if not valid:
                continue
            vx, vy = float(track["velocity_x"][i]), float(track["velocity_y"][i])
            states.append(
                {
                    "t": ts[i],
                    "x": float(track["center_x"][i]),
                    "y": float(track["center_y"][i]),
                    "heading": float(track["heading"][i]),
                    "speed": math.hypot(vx, vy),
                }
            )
        if states:
            agents.append(
                {
                    "id": str(track["id"]),
                    "length": float(track["length"]),
                    "width": float(track["width"]),
                    "states": states,
                }
            )
    ego_index = int(record["sdc_track_index"])
    return {
        "dt": dt,
        "history_horizon": history_horizon,
        "future_horizon": ts[-1] - ts[0] - history_horizon,
        "ego_id": str(record["tracks"][ego_index]["id"]),
        "map": {
            "lanes": [
                [[float(x), float(y)] for x, y in feat["polyline"]]
                for feat in record.get("map_features", [])
            ],
            "drivable": [],
        },
        "agents": agents,
    }
