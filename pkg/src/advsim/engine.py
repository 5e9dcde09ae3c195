"""Closed-loop episode engine.

One episode: pick the opponent once from the initial observation, then every
update cycle refresh the opponent's attack trajectory by maximizing
P(Y_ov) * sum_k P(Y_av_k | Y_ov) * Coll(Y_ov, Y_av_k) over the marginal
opponent hypotheses, stepping the opponent along the chosen plan while the
ego follows its own planner and every other agent replays its log. The
episode ends at the first ego contact, at the end of the future horizon, or
at the end of the log.
"""
from __future__ import annotations

import hashlib
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

from .errors import (
    AdvSimError,
    ConfigError,
    DataError,
    EmptyHistoryError,
    InsufficientDataError,
    NoOpponentError,
    PathLostError,
)
from .geometry import CollisionReport, box_for_pose, boxes_intersect, trajectory_collision
from .opponent import ScorerModel, score_and_select
from .planners import IdmPlanner, PlannerKind
from .prediction import ConditionalPredictor, HypothesisSet, PredictorConfig, predict_marginal
from .scenario import AgentTrack, Pose, Scenario, TrajectoryHypothesis, slice_observation

MODE_CYCLES = {"g": math.inf, "s1": 1.0, "s2": 2.0, "s4": 4.0}


@dataclass(frozen=True)
class SimConfig:
    mode: str = "s1"                 # g | s1 | s2 | s4 | custom
    update_cycle: float | None = None  # seconds, custom mode only
    n1: int = 6
    n2: int = 6
    planner: PlannerKind = field(default_factory=PlannerKind)
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    select_mode: str = "argmax"      # argmax | sample
    temperature: float = 0.1
    seed: int = 0
    null_adversary: bool = False
    forced_opponent: str | None = None

    def __post_init__(self):
        if self.mode not in (*MODE_CYCLES, "custom"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.mode == "custom":
            if self.update_cycle is None or self.update_cycle <= 0:
                raise ConfigError("custom mode requires update_cycle > 0")
        elif self.update_cycle is not None and self.update_cycle != MODE_CYCLES[self.mode]:
            raise ConfigError(f"mode {self.mode} implies update_cycle {MODE_CYCLES[self.mode]}")
        if self.n1 < 1 or self.n2 < 1:
            raise ConfigError("n1 and n2 must be >= 1")
        if self.select_mode not in ("argmax", "sample"):
            raise ConfigError(f"unknown select_mode {self.select_mode!r}")

    @property
    def cycle_seconds(self) -> float:
        if self.mode == "custom":
            return float(self.update_cycle)
        return MODE_CYCLES[self.mode]


@dataclass(frozen=True)
class SelectionResult:
    """One replan: the chosen opponent trajectory plus everything behind it."""

    trajectory: TrajectoryHypothesis
    index: int
    risks: tuple[float, ...]
    fallback: bool
    ov_set: HypothesisSet
    av_sets: tuple[HypothesisSet, ...]
    collisions: tuple[tuple[bool, ...], ...]


@dataclass(frozen=True)
class EpisodeResult:
    scenario_id: str
    mode: str
    planner_kind: str
    opponent_id: str | None
    opponent_scores: dict[str, float] | None
    collision: CollisionReport
    collision_agent: str | None
    collision_with_opponent: bool | None
    plans: tuple[tuple[float, TrajectoryHypothesis], ...]
    ego_track: tuple[Pose, ...]
    ov_track: tuple[Pose, ...]
    n_replans: int
    plan_exhausted: bool = False
    end_of_log: bool = False
    invalid: bool = False
    invalid_reason: str | None = None
    generation_time: float = 0.0


def episode_seed(seed: int, scenario_id: str) -> int:
    """Stable per-scenario seed, independent of corpus ordering."""
    digest = hashlib.sha256(f"{seed}:{scenario_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def select_adversarial_trajectory(
    obs: Scenario, ov: str, ego: str, cfg: SimConfig
) -> SelectionResult:
    """Pick the opponent trajectory maximizing factorized collision risk.

    risk_j = P_j * sum_k Q_jk * Coll_jk. When no pair collides, falls back to
    the opponent trajectory from the pair maximizing P_j * Q_jk.
    """
    ov_track = obs.track(ov)
    ego_track = obs.track(ego)
    ov_size = (ov_track.length, ov_track.width)
    ego_size = (ego_track.length, ego_track.width)

    ov_set = predict_marginal(obs, ov, replace(cfg.predictor, n_hypotheses=cfg.n1))
    conditional = ConditionalPredictor(
        obs, ego, replace(cfg.predictor, n_hypotheses=cfg.n2), ov_size=ov_size
    )
    risks = []
    av_sets = []
    coll_rows = []
    for y_ov in ov_set.hypotheses:
        av_set = conditional.predict(y_ov)
        row = tuple(
            trajectory_collision(y_ov, y_av, ov_size, ego_size).occurred
            for y_av in av_set.hypotheses
        )
        risk = y_ov.probability * sum(
            y_av.probability for y_av, hit in zip(av_set.hypotheses, row) if hit
        )
        av_sets.append(av_set)
        coll_rows.append(row)
        risks.append(risk)

    if max(risks) > 0.0:
        index = risks.index(max(risks))
        fallback = False
    else:
        best = (-1.0, 0)
        for j, (y_ov, av_set) in enumerate(zip(ov_set.hypotheses, av_sets)):
            for y_av in av_set.hypotheses:
                product = y_ov.probability * y_av.probability
                if product > best[0]:
                    best = (product, j)
        index = best[1]
        fallback = True
    return SelectionResult(
        trajectory=ov_set.hypotheses[index],
        index=index,
        risks=tuple(risks),
        fallback=fallback,
        ov_set=ov_set,
        av_sets=tuple(av_sets),
        collisions=tuple(coll_rows),
    )


def _time_key(t: float) -> int:
    return round(t * 1e6)


def _nearest_opponent(obs: Scenario) -> str:
    ego_pose = obs.ego_track.states[-1]
    best = None
    for tr in obs.tracks:
        if tr.agent_id == obs.ego_id or len(tr.states) < 2:
            continue
        pose = tr.states[-1]
        dist = math.hypot(pose.x - ego_pose.x, pose.y - ego_pose.y)
        if best is None or (dist, tr.agent_id) < best[:2]:
            best = (dist, tr.agent_id)
    if best is None:
        raise NoOpponentError("no surrounding vehicle has sufficient history")
    return best[1]


def _observation(s: Scenario, sim: dict[str, list[Pose]], t: float) -> Scenario:
    tol = s.dt * 0.5
    lo = t - s.history_horizon - tol
    tracks = []
    for tr in s.tracks:
        states = tuple(p for p in sim[tr.agent_id] if lo <= p.t <= t + tol)
        if states:
            tracks.append(replace(tr, states=states))
    return replace(s, tracks=tuple(tracks))


def _contact(
    s: Scenario, sim: dict[str, list[Pose]], t: float, opponent: str | None
) -> tuple[str, Pose, Pose] | None:
    ego_pose = sim[s.ego_id][-1]
    ego_track = s.ego_track
    ego_box = box_for_pose(ego_pose, ego_track.length, ego_track.width)
    others = sorted(tr.agent_id for tr in s.tracks if tr.agent_id != s.ego_id)
    if opponent in others:
        others.remove(opponent)
        others.insert(0, opponent)
    for agent_id in others:
        poses = sim.get(agent_id)
        if not poses or abs(poses[-1].t - t) > s.dt * 0.5:
            continue
        tr = s.track(agent_id)
        if boxes_intersect(ego_box, box_for_pose(poses[-1], tr.length, tr.width)):
            return agent_id, ego_pose, poses[-1]
    return None


def run_episode(
    s: Scenario, cfg: SimConfig, scorer: ScorerModel | None = None
) -> EpisodeResult:
    """Simulate one episode; recoverable planner/selection failures yield an
    invalid result rather than raising."""
    started = time.perf_counter()
    try:
        return _run_episode(s, cfg, scorer, started)
    except (NoOpponentError, PathLostError, EmptyHistoryError, InsufficientDataError) as exc:
        return EpisodeResult(
            scenario_id=s.scenario_id,
            mode=cfg.mode,
            planner_kind=cfg.planner.kind,
            opponent_id=None,
            opponent_scores=None,
            collision=CollisionReport(occurred=False),
            collision_agent=None,
            collision_with_opponent=None,
            plans=(),
            ego_track=(),
            ov_track=(),
            n_replans=0,
            invalid=True,
            invalid_reason=f"{type(exc).__name__}: {exc}",
            generation_time=time.perf_counter() - started,
        )


def _run_episode(s, cfg, scorer, started) -> EpisodeResult:
    dt = s.dt
    t0 = s.t_first + round(s.history_horizon / dt) * dt
    steps_total = round(min(s.future_horizon, s.t_last - t0) / dt)
    if steps_total < 1:
        raise InsufficientDataError("no future steps beyond the history horizon")
    obs0 = slice_observation(s, t0)

    opponent_scores = None
    if cfg.forced_opponent is not None:
        opponent = cfg.forced_opponent
        if opponent == s.ego_id or all(tr.agent_id != opponent for tr in s.tracks):
            raise NoOpponentError(f"forced opponent {opponent!r} not available")
    elif scorer is not None:
        chosen = score_and_select(
            obs0,
            scorer,
            mode=cfg.select_mode,
            temperature=cfg.temperature,
            seed=episode_seed(cfg.seed, s.scenario_id),
        )
        opponent = chosen.selected
        opponent_scores = chosen.scores
    elif cfg.null_adversary:
        opponent = _nearest_opponent(obs0)
    else:
        raise ConfigError("adversarial run requires a scorer model or forced_opponent")

    sim: dict[str, list[Pose]] = {
        tr.agent_id: [p for p in tr.states if p.t <= t0 + dt * 0.5] for tr in s.tracks
    }
    idm = IdmPlanner(s, cfg.planner.idm) if cfg.planner.kind == "idm" else None

    cycle = cfg.cycle_seconds
    steps_per_cycle = None if math.isinf(cycle) else max(1, round(cycle / dt))

    plans: list[tuple[float, TrajectoryHypothesis]] = []
    plan_lookup: dict[int, Pose] = {}
    plan_exhausted = False
    end_of_log = False
    collision = CollisionReport(occurred=False)
    collision_agent = None

    for k in range(steps_total):
        t = t0 + k * dt
        t_next = t0 + (k + 1) * dt

        if not cfg.null_adversary and (
            k == 0 or (steps_per_cycle is not None and k % steps_per_cycle == 0)
        ):
            selection = select_adversarial_trajectory(
                _observation(s, sim, t), opponent, s.ego_id, cfg
            )
            plans.append((t, selection.trajectory))
            plan_lookup = {_time_key(p.t): p for p in selection.trajectory.poses}

        # Opponent motion: planned waypoints (or log replay for the null baseline).
        if cfg.null_adversary:
            ov_next = s.track(opponent).state_at(t_next, dt)
            if ov_next is None:
                ov_next = _hold(sim[opponent][-1], t_next)
        else:
            ov_next = plan_lookup.get(_time_key(t_next))
            if ov_next is None:
                plan_exhausted = True
                ov_next = _coast(sim[opponent][-1], t_next, dt)

        # Ego motion via the configured planner.
        if idm is not None:
            current = {aid: poses[-1] for aid, poses in sim.items() if poses}
            ego_next = idm.step(current, t)
        else:
            ego_next = s.ego_track.state_at(t_next, dt)
            if ego_next is None:
                end_of_log = True
                break

        for tr in s.tracks:
            if tr.agent_id == s.ego_id:
                sim[tr.agent_id].append(ego_next)
            elif tr.agent_id == opponent:
                sim[tr.agent_id].append(ov_next)
            else:
                logged = tr.state_at(t_next, dt)
                sim[tr.agent_id].append(logged if logged is not None else _hold(sim[tr.agent_id][-1], t_next))

        hit = _contact(s, sim, t_next, opponent)
        if hit is not None:
            agent_id, ego_pose, other_pose = hit
            vex, vey = ego_pose.velocity()
            vox, voy = other_pose.velocity()
            collision = CollisionReport(
                occurred=True,
                time=t_next,
                relative_speed=math.hypot(vex - vox, vey - voy),
            )
            collision_agent = agent_id
            break

    lo = t0 - dt * 0.5
    return EpisodeResult(
        scenario_id=s.scenario_id,
        mode=cfg.mode,
        planner_kind=cfg.planner.kind,
        opponent_id=opponent,
        opponent_scores=opponent_scores,
        collision=collision,
        collision_agent=collision_agent,
        collision_with_opponent=(collision_agent == opponent) if collision.occurred else None,
        plans=tuple(plans),
        ego_track=tuple(p for p in sim[s.ego_id] if p.t >= lo),
        ov_track=tuple(p for p in sim[opponent] if p.t >= lo),
        n_replans=len(plans),
        plan_exhausted=plan_exhausted,
        end_of_log=end_of_log,
        generation_time=time.perf_counter() - started,
    )


def _hold(last: Pose, t_next: float) -> Pose:
    return Pose(t=t_next, x=last.x, y=last.y, heading=last.heading, speed=0.0)


def _coast(last: Pose, t_next: float, dt: float) -> Pose:
    vx, vy = last.velocity()
    return Pose(
        t=t_next, x=last.x + vx * dt, y=last.y + vy * dt, heading=last.heading, speed=last.speed
    )


def log_collision(s: Scenario) -> CollisionReport:
    """Collision outcome of the raw log over the future window (null baseline)."""
    dt = s.dt
    t0 = s.t_first + round(s.history_horizon / dt) * dt
    steps_total = round(min(s.future_horizon, s.t_last - t0) / dt)
    ego = s.ego_track
    for k in range(1, steps_total + 1):
        t = t0 + k * dt
        ego_pose = ego.state_at(t, dt)
        if ego_pose is None:
            break
        ego_box = box_for_pose(ego_pose, ego.length, ego.width)
        for tr in s.tracks:
            if tr.agent_id == s.ego_id:
                continue
            pose = tr.state_at(t, dt)
            if pose is None:
                continue
            if boxes_intersect(ego_box, box_for_pose(pose, tr.length, tr.width)):
                vex, vey = ego_pose.velocity()
                vox, voy = pose.velocity()
                return CollisionReport(
                    occurred=True,
                    time=t,
                    relative_speed=math.hypot(vex - vox, vey - voy),
                )
    return CollisionReport(occurred=False)


def run_batch(
    corpus: Sequence[Scenario],
    cfg: SimConfig,
    scorer: ScorerModel | None = None,
    jobs: int = 1,
) -> list[EpisodeResult]:
    """Order-preserving batch execution; per-scenario seeds make the results
    independent of scheduling."""
    if not corpus:
        raise DataError("empty corpus")

    def one(s: Scenario) -> EpisodeResult:
        try:
            return run_episode(s, cfg, scorer)
        except AdvSimError as exc:
            return EpisodeResult(
                scenario_id=s.scenario_id,
                mode=cfg.mode,
                planner_kind=cfg.planner.kind,
                opponent_id=None,
                opponent_scores=None,
                collision=CollisionReport(occurred=False),
                collision_agent=None,
                collision_with_opponent=None,
                plans=(),
                ego_track=(),
                ov_track=(),
                n_replans=0,
                invalid=True,
                invalid_reason=f"{type(exc).__name__}: {exc}",
            )

    if jobs <= 1:
        return [one(s) for s in corpus]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, corpus))


# --- episode (de)serialization ------------------------------------------------


def _pose_to_dict(p: Pose) -> dict:
    return {"t": p.t, "x": p.x, "y": p.y, "heading": p.heading, "speed": p.speed}


def _pose_from_dict(d: dict) -> Pose:
    return Pose(t=d["t"], x=d["x"], y=d["y"], heading=d["heading"], speed=d["speed"])


def episode_to_dict(r: EpisodeResult) -> dict:
    """Deterministic episode record; wall-clock timing is kept separate."""
    return {
        "scenario_id": r.scenario_id,
        "mode": r.mode,
        "planner": r.planner_kind,
        "opponent_id": r.opponent_id,
        "opponent_scores": r.opponent_scores,
        "collision": {
            "occurred": r.collision.occurred,
            "time": r.collision.time,
            "relative_speed": r.collision.relative_speed,
            "agent_id": r.collision_agent,
            "with_opponent": r.collision_with_opponent,
        },
        "plans": [
            {
                "t": t,
                "probability": hyp.probability,
                "poses": [_pose_to_dict(p) for p in hyp.poses],
            }
            for t, hyp in r.plans
        ],
        "ego_track": [_pose_to_dict(p) for p in r.ego_track],
        "ov_track": [_pose_to_dict(p) for p in r.ov_track],
        "n_replans": r.n_replans,
        "flags": {
            "plan_exhausted": r.plan_exhausted,
            "end_of_log": r.end_of_log,
            "invalid": r.invalid,
            "invalid_reason": r.invalid_reason,
        },
    }


def episode_from_dict(data: dict, generation_time: float = 0.0) -> EpisodeResult:
    coll = data["collision"]
    return EpisodeResult(
        scenario_id=data["scenario_id"],
        mode=data["mode"],
        planner_kind=data["planner"],
        opponent_id=data["opponent_id"],
        opponent_scores=data["opponent_scores"],
        collision=CollisionReport(
            occurred=coll["occurred"],
            time=coll["time"],
            relative_speed=coll["relative_speed"],
        ),
        collision_agent=coll["agent_id"],
        collision_with_opponent=coll["with_opponent"],
        plans=tuple(
            (
                plan["t"],
                TrajectoryHypothesis(
                    poses=tuple(_pose_from_dict(p) for p in plan["poses"]),
                    probability=plan["probability"],
                ),
            )
            for plan in data["plans"]
        ),
        ego_track=tuple(_pose_from_dict(p) for p in data["ego_track"]),
        ov_track=tuple(_pose_from_dict(p) for p in data["ov_track"]),
        n_replans=data["n_replans"],
        plan_exhausted=data["flags"]["plan_exhausted"],
        end_of_log=data["flags"]["end_of_log"],
        invalid=data["flags"]["invalid"],
        invalid_reason=data["flags"]["invalid_reason"],
        generation_time=generation_time,
    )
