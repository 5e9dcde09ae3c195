import math
from dataclasses import replace

import numpy as np
import pytest

from advsim.geometry import overlap_count
from advsim.prediction import (
    HypothesisSet,
    PredictorConfig,
    predict_conditional,
    predict_marginal,
)
from advsim.scenario import (
    AgentTrack,
    MapGraph,
    Pose,
    Scenario,
    TrajectoryHypothesis,
    norm_heading,
)

DT = 0.1


def history(agent_id, x0, y0, heading, speed, n=11, length=4.5, width=1.9):
    states = tuple(
        Pose(
            t=i * DT,
            x=x0 + speed * math.cos(heading) * i * DT,
            y=y0 + speed * math.sin(heading) * i * DT,
            heading=heading,
            speed=speed,
        )
        for i in range(n)
    )
    return AgentTrack(agent_id=agent_id, length=length, width=width, states=states)


def observation(tracks, lanes=(((-60.0, 0.0), (300.0, 0.0)),), future=8.0):
    return Scenario(
        map=MapGraph(lane_centerlines=lanes),
        tracks=tuple(tracks),
        ego_id="ego",
        dt=DT,
        history_horizon=1.0,
        future_horizon=future,
        scenario_id="unit",
    )


CFG = PredictorConfig()


def check_set_invariants(hs: HypothesisSet, cfg: PredictorConfig, cur: Pose):
    probs = hs.probabilities
    assert all(p >= 0.0 for p in probs)
    assert sum(probs) == pytest.approx(1.0, abs=1e-9)
    for hyp in hs.hypotheses:
        chain = (cur, *hyp.poses)
        for a, b in zip(chain, chain[1:]):
            vax, vay = a.velocity()
            vbx, vby = b.velocity()
            ax, ay = (vbx - vax) / DT, (vby - vay) / DT
            c, s = math.cos(a.heading), math.sin(a.heading)
            assert abs(ax * c + ay * s) <= cfg.max_accel + 1e-6
            assert abs(-ax * s + ay * c) <= cfg.max_lat_accel + 1e-6
            assert abs(norm_heading(b.heading - a.heading)) <= cfg.max_yaw_rate * DT + 1e-6


def test_marginal_exact_count_and_normalization():
    obs = observation([history("ego", 0.0, 0.0, 0.0, 10.0), history("sv", 20.0, 0.0, 0.0, 10.0)])
    hs = predict_marginal(obs, "sv", CFG)
    assert len(hs.hypotheses) == CFG.n_hypotheses
    check_set_invariants(hs, CFG, obs.track("sv").states[-1])


def test_marginal_single_hypothesis_probability_one():
    obs = observation([history("ego", 0.0, 0.0, 0.0, 10.0), history("sv", 20.0, 0.0, 0.0, 10.0)])
    hs = predict_marginal(obs, "sv", replace(CFG, n_hypotheses=1))
    assert len(hs.hypotheses) == 1
    assert hs.hypotheses[0].probability == 1.0


def test_marginal_in_lane_cruise_wins():
    obs = observation([history("ego", 0.0, 3.5, 0.0, 10.0), history("sv", 0.0, 0.0, 0.0, 10.0)])
    hs = predict_marginal(obs, "sv", CFG)
    by_kind = dict(zip(hs.kinds, hs.probabilities))
    assert by_kind["cv"] == pytest.approx(max(hs.probabilities))
    # exhaustive check: cv has the maximal base score, so no other candidate
    # may exceed its probability
    assert all(by_kind["cv"] >= p - 1e-12 for p in hs.probabilities)


def test_marginal_stationary_agent_respects_kinematics():
    obs = observation([history("ego", 0.0, 3.5, 0.0, 10.0), history("sv", 0.0, 0.0, 0.0, 0.0)])
    hs = predict_marginal(obs, "sv", CFG)
    cur = obs.track("sv").states[-1]
    check_set_invariants(hs, CFG, cur)
    for hyp in hs.hypotheses:
        for pose in hyp.poses:
            tau = pose.t - cur.t
            displacement = math.hypot(pose.x - cur.x, pose.y - cur.y)
            assert displacement <= 0.5 * CFG.max_accel * tau * tau + 1e-6


def test_marginal_deterministic():
    obs = observation([history("ego", 0.0, 0.0, 0.0, 10.0), history("sv", 20.0, 3.5, 0.0, 9.0)])
    a = predict_marginal(obs, "sv", CFG)
    b = predict_marginal(obs, "sv", CFG)
    assert a == b


def test_marginal_off_map_fallback():
    obs = observation(
        [history("ego", 0.0, 0.0, 0.0, 10.0), history("sv", 20.0, 0.0, 0.0, 10.0)],
        lanes=(),
    )
    hs = predict_marginal(obs, "sv", CFG)
    assert hs.fallback
    assert set(hs.kinds) == {"brake", "cv"}
    assert sum(hs.probabilities) == pytest.approx(1.0, abs=1e-9)


def test_marginal_rigid_transform_equivariance():
    obs = observation([history("ego", 0.0, 0.0, 0.0, 10.0), history("sv", 15.0, 3.5, 0.0, 9.0)],
                      lanes=(((-60.0, 0.0), (300.0, 0.0)), ((-60.0, 3.5), (300.0, 3.5))))
    base = predict_marginal(obs, "sv", CFG)

    angle, tx, ty = 0.8, 30.0, -12.0
    c, s = math.cos(angle), math.sin(angle)
    lanes = tuple(
        tuple((c * x - s * y + tx, s * x + c * y + ty) for x, y in lane)
        for lane in obs.map.lane_centerlines
    )
    tracks = tuple(
        AgentTrack(
            tr.agent_id, tr.length, tr.width,
            tuple(
                Pose(t=p.t, x=c * p.x - s * p.y + tx, y=s * p.x + c * p.y + ty,
                     heading=p.heading + angle, speed=p.speed)
                for p in tr.states
            ),
        )
        for tr in obs.tracks
    )
    moved = Scenario(
        map=MapGraph(lane_centerlines=lanes), tracks=tracks, ego_id="ego",
        dt=DT, history_horizon=1.0, future_horizon=8.0,
    )
    transformed = predict_marginal(moved, "sv", CFG)
    assert transformed.kinds == base.kinds
    for h_moved, h_base in zip(transformed.hypotheses, base.hypotheses):
        assert h_moved.probability == pytest.approx(h_base.probability, abs=1e-6)
        for pm, pb in zip(h_moved.poses, h_base.poses):
            assert pm.x == pytest.approx(c * pb.x - s * pb.y + tx, abs=1e-6)
            assert pm.y == pytest.approx(s * pb.x + c * pb.y + ty, abs=1e-6)


def head_on_hypothesis(obs, ego_id="ego", start_ahead=25.0):
    """Opponent trajectory sweeping the ego's lane toward the ego."""
    cur = obs.track(ego_id).states[-1]
    poses = tuple(
        Pose(t=cur.t + (i + 1) * DT, x=cur.x + start_ahead - 10.0 * (i + 1) * DT, y=cur.y,
             heading=math.pi, speed=10.0)
        for i in range(round(obs.future_horizon / DT))
    )
    return TrajectoryHypothesis(poses=poses, probability=1.0)


def far_hypothesis(obs):
    poses = tuple(
        Pose(t=1.0 + (i + 1) * DT, x=1000.0 + i, y=1000.0, heading=0.0, speed=10.0)
        for i in range(round(obs.future_horizon / DT))
    )
    return TrajectoryHypothesis(poses=poses, probability=1.0)


def test_conditional_lambda_zero_matches_marginal_same_candidates():
    obs = observation([history("ego", 0.0, 0.0, 0.0, 10.0), history("sv", 25.0, 0.0, 0.0, 10.0)])
    cfg0 = replace(CFG, reaction_sensitivity=0.0)
    conditional = predict_conditional(obs, "ego", head_on_hypothesis(obs), cfg0)
    marginal = predict_marginal(obs, "ego", cfg0, include_evasive=True)
    assert conditional.kinds == marginal.kinds
    for hc, hm in zip(conditional.hypotheses, marginal.hypotheses):
        assert hc.probability == hm.probability  # bit-exact: same softmax inputs


def test_conditional_far_opponent_equals_lambda_zero():
    obs = observation([history("ego", 0.0, 0.0, 0.0, 10.0), history("sv", 25.0, 0.0, 0.0, 10.0)])
    with_lambda = predict_conditional(obs, "ego", far_hypothesis(obs), replace(CFG, reaction_sensitivity=10.0))
    without = predict_conditional(obs, "ego", far_hypothesis(obs), replace(CFG, reaction_sensitivity=0.0))
    for a, b in zip(with_lambda.hypotheses, without.hypotheses):
        assert a.probability == pytest.approx(b.probability, abs=1e-12)


def test_conditional_head_on_large_lambda_prefers_evasion():
    # A lane-sweeping head-on hits any in-lane candidate (even a braked ego),
    # so with a strongly reactive ego only the lateral evasives survive.
    obs = observation([history("ego", 0.0, 0.0, 0.0, 10.0), history("sv", 60.0, 0.0, 0.0, 10.0)])
    y_ov = head_on_hypothesis(obs, start_ahead=60.0)
    ov_size = (4.5, 1.2)
    hs = predict_conditional(
        obs, "ego", y_ov, replace(CFG, reaction_sensitivity=10.0), ov_size=ov_size
    )
    best = hs.kinds[int(np.argmax(hs.probabilities))]
    assert best in ("offset_left", "offset_right")
    # exhaustive check over the candidate set: the winner minimizes overlap
    ego_size = (4.5, 1.9)
    ovl = [overlap_count(h, y_ov, ego_size, ov_size) for h in hs.hypotheses]
    winner = int(np.argmax(hs.probabilities))
    assert ovl[winner] == min(ovl)


def test_conditional_monotone_in_lambda():
    obs = observation([history("ego", 0.0, 0.0, 0.0, 10.0), history("sv", 25.0, 0.0, 0.0, 10.0)])
    y_ov = head_on_hypothesis(obs)
    ego_size = (4.5, 1.9)
    prev = None
    for lam in (0.0, 0.05, 0.2, 1.0, 5.0):
        hs = predict_conditional(obs, "ego", y_ov, replace(CFG, reaction_sensitivity=lam))
        ovl = [overlap_count(h, y_ov, ego_size, (4.5, 2.0)) for h in hs.hypotheses]
        target = hs.probabilities[int(np.argmax(ovl))]
        if prev is not None:
            assert target <= prev + 1e-12
        prev = target


def test_conditional_probabilities_match_reweighting_oracle():
    obs = observation([history("ego", 0.0, 0.0, 0.0, 10.0), history("sv", 25.0, 0.0, 0.0, 10.0)])
    y_ov = head_on_hypothesis(obs)
    lam = 0.7
    hs = predict_conditional(obs, "ego", y_ov, replace(CFG, reaction_sensitivity=lam))
    base = predict_conditional(obs, "ego", y_ov, replace(CFG, reaction_sensitivity=0.0))
    ego_size = (4.5, 1.9)
    weights = np.array(
        [
            p * math.exp(-lam * overlap_count(h, y_ov, ego_size, (4.5, 2.0)))
            for p, h in zip(base.probabilities, base.hypotheses)
        ]
    )
    weights /= weights.sum()
    for got, expected in zip(hs.probabilities, weights):
        assert got == pytest.approx(expected, abs=1e-12)


def test_goal_variants_complete_mid_horizon():
    obs = observation([history("ego", 0.0, 3.5, 0.0, 10.0), history("sv", 0.0, 0.0, 0.0, 10.0)])
    hs = predict_marginal(obs, "sv", replace(CFG, n_hypotheses=12))
    arrive_kinds = [k for k in hs.kinds if k.startswith("goal:") and k.endswith(":2.0")]
    assert arrive_kinds, "expected at least one quarter-horizon arrival candidate"
