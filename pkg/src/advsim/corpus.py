"""Synthetic fixture corpus: 20 deterministic scenarios covering lead-follow,
side-by-side, crossing, trailing, and far-parallel interactions.

Every scenario is 9 s at 10 Hz (1 s observation history, 8 s future) with
collision-free logs and constant-velocity agents, so the null-adversary
baseline replays cleanly and naturalness self-comparisons are exact.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .scenario import AgentTrack, MapGraph, Pose, Scenario, save_scenario

DT = 0.1
HISTORY = 1.0
FUTURE = 8.0
N_STEPS = 91  # t = 0.0 .. 9.0

EGO_ID = "ego"
LEAD_VEHICLE_SCENARIO = "lead_vehicle_00"
EGO_BRAKE_SCENARIO = "ego_brake_00"
EGO_BRAKE_OPPONENT = "adv"


def _lane(y: float, x_lo: float = -60.0, x_hi: float = 300.0, step: float = 5.0):
    xs = np.arange(x_lo, x_hi + step, step)
    return tuple((float(x), y) for x in xs)


def _vertical_lane(x: float, y_lo: float = -60.0, y_hi: float = 300.0, step: float = 5.0):
    ys = np.arange(y_lo, y_hi + step, step)
    return tuple((x, float(y)) for y in ys)


def _straight_map(lane_ys, far_road_ys=()) -> MapGraph:
    lanes = tuple(_lane(y) for y in (*lane_ys, *far_road_ys))
    y_all = [*lane_ys, *far_road_ys]
    lo, hi = min(y_all) - 2.0, max(y_all) + 2.0
    drivable = ((( -60.0, lo), (300.0, lo), (300.0, hi), (-60.0, hi)),)
    return MapGraph(lane_centerlines=lanes, drivable_polygons=drivable)


def _crossing_map(cross_x: float) -> MapGraph:
    return MapGraph(
        lane_centerlines=(_lane(0.0), _vertical_lane(cross_x)),
        drivable_polygons=(),
    )


def _straight_track(
    agent_id: str,
    x0: float,
    y0: float,
    heading: float,
    speed: float,
    length: float = 4.5,
    width: float = 1.9,
) -> AgentTrack:
    c, s = math.cos(heading), math.sin(heading)
    states = tuple(
        Pose(t=i * DT, x=x0 + speed * c * i * DT, y=y0 + speed * s * i * DT,
             heading=heading, speed=speed)
        for i in range(N_STEPS)
    )
    return AgentTrack(agent_id=agent_id, length=length, width=width, states=states)


def _stationary_track(agent_id: str, x0: float, y0: float, heading: float,
                      length: float = 4.5, width: float = 1.9) -> AgentTrack:
    states = tuple(
        Pose(t=i * DT, x=x0, y=y0, heading=heading, speed=0.0) for i in range(N_STEPS)
    )
    return AgentTrack(agent_id=agent_id, length=length, width=width, states=states)


def _scenario(scenario_id: str, map_graph: MapGraph, tracks) -> Scenario:
    return Scenario(
        map=map_graph,
        tracks=tuple(tracks),
        ego_id=EGO_ID,
        dt=DT,
        history_horizon=HISTORY,
        future_horizon=FUTURE,
        scenario_id=scenario_id,
    )


def _rotate_scenario(s: Scenario, angle: float) -> Scenario:
    c, sn = math.cos(angle), math.sin(angle)

    def rot_pt(x, y):
        return (c * x - sn * y, sn * x + c * y)

    lanes = tuple(tuple(rot_pt(x, y) for x, y in lane) for lane in s.map.lane_centerlines)
    polys = tuple(tuple(rot_pt(x, y) for x, y in poly) for poly in s.map.drivable_polygons)
    tracks = []
    for tr in s.tracks:
        states = tuple(
            Pose(t=p.t, x=rot_pt(p.x, p.y)[0], y=rot_pt(p.x, p.y)[1],
                 heading=p.heading + angle, speed=p.speed)
            for p in tr.states
        )
        tracks.append(AgentTrack(tr.agent_id, tr.length, tr.width, states))
    return Scenario(
        map=MapGraph(lanes, polys),
        tracks=tuple(tracks),
        ego_id=s.ego_id,
        dt=s.dt,
        history_horizon=s.history_horizon,
        future_horizon=s.future_horizon,
        scenario_id=s.scenario_id,
    )


def build_corpus(seed: int = 7) -> list[Scenario]:
    """The 20-scenario fixture corpus, deterministic for a given seed."""
    rng = np.random.default_rng(seed)
    scenarios = []

    # Lead-follow: SV ahead in the ego lane, matched speed.
    for i in range(4):
        v = float(rng.uniform(8.0, 13.0))
        gap = float(rng.uniform(14.0, 26.0))
        scenarios.append(
            _scenario(
                f"lead_follow_{i:02d}",
                _straight_map((0.0, 3.5, 7.0), far_road_ys=(50.0,)),
                [
                    _straight_track(EGO_ID, 0.0, 0.0, 0.0, v, length=4.8, width=2.0),
                    _straight_track("lead", gap, 0.0, 0.0, v),
                    _straight_track("far", 80.0, 50.0, math.pi, float(rng.uniform(8, 12))),
                ],
            )
        )

    # Adjacent lane, side by side.
    for i in range(4):
        v = float(rng.uniform(8.0, 13.0))
        ahead = float(rng.uniform(-3.0, 3.0))
        scenarios.append(
            _scenario(
                f"adjacent_{i:02d}",
                _straight_map((0.0, 3.5, 7.0), far_road_ys=(50.0,)),
                [
                    _straight_track(EGO_ID, 0.0, 0.0, 0.0, v, length=4.8, width=2.0),
                    _straight_track("side", ahead, 3.5, 0.0, v),
                    _straight_track("far", 120.0, 50.0, math.pi, float(rng.uniform(8, 12))),
                ],
            )
        )

    # Crossing traffic: the SV clears the intersection well before the ego.
    for i in range(4):
        v = float(rng.uniform(9.0, 12.0))
        cross_x = float(rng.uniform(55.0, 75.0))
        v_sv = float(rng.uniform(8.0, 11.0))
        t_sv_cross = cross_x / v * 0.45  # SV crosses early; logs stay clear
        base = _scenario(
            f"crossing_{i:02d}",
            _crossing_map(cross_x),
            [
                _straight_track(EGO_ID, 0.0, 0.0, 0.0, v, length=4.8, width=2.0),
                _straight_track("crosser", cross_x, -t_sv_cross * v_sv, math.pi / 2, v_sv),
                _straight_track("far", cross_x + 60.0, 80.0, -math.pi / 2, 9.0),
            ],
        )
        if i >= 2:
            base = _rotate_scenario(base, (0.45 if i == 2 else -0.7))
        scenarios.append(base)

    # Trailing vehicle behind the ego in the same lane.
    for i in range(3):
        v = float(rng.uniform(8.0, 13.0))
        gap = float(rng.uniform(5.3, 6.5))
        scenarios.append(
            _scenario(
                f"follower_{i:02d}",
                _straight_map((0.0, 3.5), far_road_ys=(45.0,)),
                [
                    _straight_track(EGO_ID, 0.0, 0.0, 0.0, v, length=4.8, width=2.0),
                    _straight_track("tail", -gap, 0.0, 0.0, v),
                    _straight_track("far", 60.0, 45.0, math.pi, float(rng.uniform(8, 12))),
                ],
            )
        )

    # Far parallel road only: no plausible attacker nearby.
    for i in range(3):
        v = float(rng.uniform(8.0, 13.0))
        scenarios.append(
            _scenario(
                f"parallel_far_{i:02d}",
                _straight_map((0.0, 3.5), far_road_ys=(50.0, 53.5)),
                [
                    _straight_track(EGO_ID, 0.0, 0.0, 0.0, v, length=4.8, width=2.0),
                    _straight_track("far_a", 30.0, 50.0, 0.0, float(rng.uniform(8, 12))),
                    _straight_track("far_b", 90.0, 53.5, math.pi, float(rng.uniform(8, 12))),
                ],
            )
        )

    # Reactivity fixture: a stalled car ahead forces the IDM ego to brake a
    # couple of seconds into the episode; the rear-left SV is the designated
    # attacker and needs several seconds to reach the ego.
    scenarios.append(
        _scenario(
            EGO_BRAKE_SCENARIO,
            _straight_map((0.0, 3.5, 7.0), far_road_ys=(50.0,)),
            [
                _straight_track(EGO_ID, 0.0, 0.0, 0.0, 10.0, length=4.8, width=2.0),
                _straight_track(EGO_BRAKE_OPPONENT, -8.0, 3.5, 0.0, 10.0),
                _stationary_track("blocker", 109.65, 0.0, 0.0),
                _straight_track("far", 70.0, 50.0, math.pi, 10.0),
            ],
        )
    )

    # Lead-vehicle archetype: the in-lane lead SV is the clear attacker.
    scenarios.append(
        _scenario(
            LEAD_VEHICLE_SCENARIO,
            _straight_map((0.0, 3.5, 7.0), far_road_ys=(50.0, 53.5)),
            [
                _straight_track(EGO_ID, 0.0, 0.0, 0.0, 10.0, length=4.8, width=2.0),
                _straight_track("lead", 25.0, 0.0, 0.0, 10.0),
                _straight_track("far_a", 60.0, 50.0, math.pi, 9.0),
                _straight_track("far_b", 10.0, 53.5, 0.0, 11.0),
            ],
        )
    )

    assert len(scenarios) == 20
    return scenarios


def write_corpus(out_dir: str | Path, seed: int = 7) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for s in build_corpus(seed):
        path = out / f"{s.scenario_id}.json"
        save_scenario(s, path)
        paths.append(path)
    return paths
