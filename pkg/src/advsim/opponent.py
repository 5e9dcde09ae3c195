"""Opponent prediction: heuristic interaction labels, interaction features,
a focal-loss trained scorer, and adversarial opponent selection.

Labeling runs on full recorded episodes (training time); scoring needs only
the short observation history. A surrounding vehicle is labeled positive when
its driven path region overlaps the ego's (irrespective of simultaneity) or
when it ever comes closer to the ego than one ego length.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DataError,
    DegenerateCorpusError,
    InsufficientDataError,
    NoOpponentError,
)
from .geometry import box_for_pose, boxes_intersect, point_to_polyline_distance
from .scenario import AgentTrack, Scenario, norm_heading

FOCAL_EPS = 1e-7

#: Feature components produced by :func:`extract_features`, with units.
FEATURE_NAMES = (
    "rel_longitudinal_m",   # SV position along the ego heading, ego frame
    "rel_lateral_m",        # SV position left of the ego heading, ego frame
    "rel_heading_rad",      # heading difference, wrapped to (-pi, pi]
    "rel_speed_mps",        # SV speed minus ego speed
    "closing_speed_mps",    # negative range rate (positive = approaching)
    "distance_m",           # centroid distance
    "same_lane",            # 1.0 when both are nearest to the same centerline
    "time_to_closest_s",    # constant-velocity closest-approach time, clipped
)

TCA_CLIP_S = 10.0


@dataclass(frozen=True)
class InteractionLabel:
    agent_id: str
    positive: bool


@dataclass(frozen=True)
class AdversarialScoreSet:
    scores: dict[str, float]
    selected: str


def _track_boxes(track: AgentTrack):
    return [box_for_pose(p, track.length, track.width) for p in track.states]


def _paths_overlap(ego: AgentTrack, sv: AgentTrack) -> bool:
    """Time-free overlap of the two swept box regions."""
    ego_boxes = _track_boxes(ego)
    sv_boxes = _track_boxes(sv)
    ego_xy = np.array([(p.x, p.y) for p in ego.states])
    sv_xy = np.array([(p.x, p.y) for p in sv.states])
    reach = 0.5 * (
        math.hypot(ego.length, ego.width) + math.hypot(sv.length, sv.width)
    )
    dists = np.hypot(
        ego_xy[:, None, 0] - sv_xy[None, :, 0],
        ego_xy[:, None, 1] - sv_xy[None, :, 1],
    )
    for i, j in zip(*np.nonzero(dists <= reach)):
        if boxes_intersect(ego_boxes[i], sv_boxes[j]):
            return True
    return False


def _ever_within_ego_length(ego: AgentTrack, sv: AgentTrack, dt: float) -> bool:
    for pose in sv.states:
        ego_pose = ego.state_at(pose.t, dt)
        if ego_pose is None:
            continue
        if math.hypot(pose.x - ego_pose.x, pose.y - ego_pose.y) < ego.length:
            return True
    return False


def generate_labels(s: Scenario) -> list[InteractionLabel]:
    """Heuristic supervision: one label per surrounding vehicle.

    Requires the full recorded episode (history plus future); raises when the
    scenario holds observation history only.
    """
    span = s.ego_track.t_last - s.ego_track.t_first
    if span < s.history_horizon + s.dt:
        raise InsufficientDataError(
            "label generation needs future tracks beyond the observation history"
        )
    ego = s.ego_track
    labels = []
    for track in s.tracks:
        if track.agent_id == s.ego_id:
            continue
        positive = _ever_within_ego_length(ego, track, s.dt) or _paths_overlap(
            ego, track
        )
        labels.append(InteractionLabel(agent_id=track.agent_id, positive=positive))
    return labels


def _nearest_lane_index(map_graph, x: float, y: float) -> int | None:
    if not map_graph.lane_centerlines:
        return None
    dists = [
        point_to_polyline_distance((x, y), lane)
        for lane in map_graph.lane_centerlines
    ]
    return int(np.argmin(dists))


def extract_features(s: Scenario, sv_id: str) -> np.ndarray:
    """Interaction feature vector (see FEATURE_NAMES) from history-only data."""
    try:
        sv = s.track(sv_id)
    except KeyError:
        raise DataError(f"unknown agent_id {sv_id!r}") from None
    if len(sv.states) < 2:
        raise InsufficientDataError(f"agent {sv_id!r} has a single-state history")
    ego = s.ego_track
    t_ref = min(ego.t_last, sv.t_last)
    ego_pose = ego.state_at(t_ref, s.dt)
    sv_pose = sv.state_at(t_ref, s.dt)
    if ego_pose is None or sv_pose is None:
        raise InsufficientDataError(f"no common timestamp for agent {sv_id!r}")

    dx, dy = sv_pose.x - ego_pose.x, sv_pose.y - ego_pose.y
    c, snh = math.cos(ego_pose.heading), math.sin(ego_pose.heading)
    rel_long = dx * c + dy * snh
    rel_lat = -dx * snh + dy * c
    rel_heading = norm_heading(sv_pose.heading - ego_pose.heading)
    rel_speed = sv_pose.speed - ego_pose.speed

    vex, vey = ego_pose.velocity()
    vsx, vsy = sv_pose.velocity()
    dvx, dvy = vsx - vex, vsy - vey
    dist = math.hypot(dx, dy)
    closing = 0.0 if dist < 1e-9 else -(dx * dvx + dy * dvy) / dist
    dv2 = dvx * dvx + dvy * dvy
    tca = 0.0 if dv2 < 1e-12 else min(max(-(dx * dvx + dy * dvy) / dv2, 0.0), TCA_CLIP_S)

    ego_lane = _nearest_lane_index(s.map, ego_pose.x, ego_pose.y)
    sv_lane = _nearest_lane_index(s.map, sv_pose.x, sv_pose.y)
    same_lane = 1.0 if ego_lane is not None and ego_lane == sv_lane else 0.0

    return np.array(
        [rel_long, rel_lat, rel_heading, rel_speed, closing, dist, same_lane, tca]
    )


# --- focal loss -------------------------------------------------------------


def _clamp_p(p: float) -> float:
    return min(max(p, FOCAL_EPS), 1.0 - FOCAL_EPS)


def focal_loss(p: float, y: int, alpha_t: float = 0.25, gamma: float = 2.0) -> float:
    """-alpha_t * (1 - p_t)^gamma * log(p_t), with p_t = p if y else 1 - p."""
    if gamma < 0:
        raise DataError("gamma must be >= 0")
    p = _clamp_p(p)
    p_t = p if y == 1 else 1.0 - p
    return -alpha_t * (1.0 - p_t) ** gamma * math.log(p_t)


def focal_loss_grad_logit(
    p: float, y: int, alpha_t: float = 0.25, gamma: float = 2.0
) -> float:
    """d(focal loss)/d(logit z) where p = sigmoid(z)."""
    p = _clamp_p(p)
    if y == 1:
        return alpha_t * (1.0 - p) ** gamma * (gamma * p * math.log(p) - (1.0 - p))
    return alpha_t * p**gamma * (p - gamma * (1.0 - p) * math.log(1.0 - p))


def _focal_grad_logit_vec(p: np.ndarray, y: np.ndarray, alpha_t: float, gamma: float):
    p = np.clip(p, FOCAL_EPS, 1.0 - FOCAL_EPS)
    pos = alpha_t * (1.0 - p) ** gamma * (gamma * p * np.log(p) - (1.0 - p))
    neg = alpha_t * p**gamma * (p - gamma * (1.0 - p) * np.log(1.0 - p))
    return np.where(y == 1, pos, neg)


def _focal_loss_vec(p: np.ndarray, y: np.ndarray, alpha_t: float, gamma: float):
    p = np.clip(p, FOCAL_EPS, 1.0 - FOCAL_EPS)
    p_t = np.where(y == 1, p, 1.0 - p)
    return -alpha_t * (1.0 - p_t) ** gamma * np.log(p_t)


# --- scorer model ------------------------------------------------------------

MODEL_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class TrainHyper:
    alpha_t: float = 0.25
    gamma: float = 2.0
    learning_rate: float = 0.5
    epochs: int = 400
    hidden: int = 16


@dataclass(frozen=True)
class ScorerModel:
    """Two-layer perceptron with sigmoid output and input standardization."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    feature_mean: np.ndarray
    feature_std: np.ndarray
    hyper: TrainHyper = TrainHyper()
    seed: int = 0
    loss_curve: tuple[float, ...] = field(default=(), repr=False)

    def logit(self, features: np.ndarray) -> np.ndarray:
        x = (np.atleast_2d(features) - self.feature_mean) / self.feature_std
        h = np.tanh(x @ self.w1 + self.b1)
        return h @ self.w2 + self.b2

    def predict(self, features: np.ndarray) -> float:
        """Adversarial score in (0, 1) for one feature vector."""
        z = float(self.logit(features)[0])
        return 1.0 / (1.0 + math.exp(-z))

    def to_dict(self) -> dict:
        return {
            "schema_version": MODEL_SCHEMA_VERSION,
            "dims": {"input": self.w1.shape[0], "hidden": self.w1.shape[1]},
            "weights": {
                "w1": self.w1.tolist(),
                "b1": self.b1.tolist(),
                "w2": self.w2.tolist(),
                "b2": self.b2,
            },
            "feature_norm": {
                "mean": self.feature_mean.tolist(),
                "std": self.feature_std.tolist(),
            },
            "hyperparameters": {
                "alpha_t": self.hyper.alpha_t,
                "gamma": self.hyper.gamma,
                "learning_rate": self.hyper.learning_rate,
                "epochs": self.hyper.epochs,
                "hidden": self.hyper.hidden,
                "seed": self.seed,
            },
        }

    @staticmethod
    def from_dict(data: dict) -> "ScorerModel":
        if data.get("schema_version") != MODEL_SCHEMA_VERSION:
            raise DataError(
                f"unsupported model schema_version {data.get('schema_version')!r}"
            )
        w = data["weights"]
        h = data["hyperparameters"]
        return ScorerModel(
            w1=np.array(w["w1"], dtype=float),
            b1=np.array(w["b1"], dtype=float),
            w2=np.array(w["w2"], dtype=float),
            b2=float(w["b2"]),
            feature_mean=np.array(data["feature_norm"]["mean"], dtype=float),
            feature_std=np.array(data["feature_norm"]["std"], dtype=float),
            hyper=TrainHyper(
                alpha_t=h["alpha_t"],
                gamma=h["gamma"],
                learning_rate=h["learning_rate"],
                epochs=h["epochs"],
                hidden=h["hidden"],
            ),
            seed=int(h["seed"]),
        )


def save_model(model: ScorerModel, path: str | Path):
    Path(path).write_text(
        json.dumps(model.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_model(path: str | Path) -> ScorerModel:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid model file {path}: {exc}") from exc
    return ScorerModel.from_dict(data)


def train_scorer(
    corpus: list[tuple[np.ndarray, InteractionLabel]],
    hyper: TrainHyper = TrainHyper(),
    seed: int = 0,
) -> ScorerModel:
    """Full-batch gradient descent on the focal loss; deterministic per seed."""
    if not corpus:
        raise DegenerateCorpusError("empty training corpus")
    x = np.array([np.asarray(f, dtype=float) for f, _ in corpus])
    y = np.array([1 if lab.positive else 0 for _, lab in corpus])
    if y.min() == y.max():
        raise DegenerateCorpusError("training corpus contains a single class")

    mean = x.mean(axis=0)
    std = np.maximum(x.std(axis=0), 1e-9)
    xn = (x - mean) / std
    n, d = xn.shape

    rng = np.random.default_rng(seed)
    w1 = rng.normal(scale=1.0 / math.sqrt(d), size=(d, hyper.hidden))
    b1 = np.zeros(hyper.hidden)
    w2 = rng.normal(scale=1.0 / math.sqrt(hyper.hidden), size=hyper.hidden)
    b2 = 0.0

    losses = []
    for _ in range(hyper.epochs):
        z1 = xn @ w1 + b1
        h = np.tanh(z1)
        z2 = h @ w2 + b2
        p = 1.0 / (1.0 + np.exp(-z2))
        losses.append(float(_focal_loss_vec(p, y, hyper.alpha_t, hyper.gamma).mean()))

        g = _focal_grad_logit_vec(p, y, hyper.alpha_t, hyper.gamma) / n
        grad_w2 = h.T @ g
        grad_b2 = g.sum()
        gh = np.outer(g, w2) * (1.0 - h**2)
        grad_w1 = xn.T @ gh
        grad_b1 = gh.sum(axis=0)

        w1 -= hyper.learning_rate * grad_w1
        b1 -= hyper.learning_rate * grad_b1
        w2 -= hyper.learning_rate * grad_w2
        b2 -= hyper.learning_rate * grad_b2

    z2 = np.tanh(xn @ w1 + b1) @ w2 + b2
    p = 1.0 / (1.0 + np.exp(-z2))
    losses.append(float(_focal_loss_vec(p, y, hyper.alpha_t, hyper.gamma).mean()))

    return ScorerModel(
        w1=w1,
        b1=b1,
        w2=w2,
        b2=b2,
        feature_mean=mean,
        feature_std=std,
        hyper=hyper,
        seed=seed,
        loss_curve=tuple(losses),
    )


def training_accuracy(model: ScorerModel, corpus) -> float:
    hit = 0
    for features, label in corpus:
        hit += (model.predict(features) >= 0.5) == label.positive
    return hit / len(corpus)


# --- selection ---------------------------------------------------------------


def select_from_scores(
    scores: dict[str, float],
    mode: str = "argmax",
    temperature: float = 0.1,
    rng: np.random.Generator | None = None,
) -> str:
    """Pick an opponent id from adversarial scores.

    argmax breaks ties lexicographically on agent_id; sample draws from
    softmax(scores / temperature).
    """
    if not scores:
        raise NoOpponentError("no scored surrounding vehicles")
    if mode == "argmax":
        best = max(scores.values())
        return min(aid for aid, sc in scores.items() if sc == best)
    if mode == "sample":
        if temperature <= 0:
            raise DataError("temperature must be > 0")
        ids = sorted(scores)
        logits = np.array([scores[a] for a in ids]) / temperature
        logits -= logits.max()
        probs = np.exp(logits)
        probs /= probs.sum()
        rng = rng if rng is not None else np.random.default_rng()
        return ids[int(rng.choice(len(ids), p=probs))]
    raise DataError(f"unknown selection mode {mode!r}")


def score_and_select(
    s: Scenario,
    model: ScorerModel,
    mode: str = "argmax",
    temperature: float = 0.1,
    seed: int | None = None,
) -> AdversarialScoreSet:
    """Score every eligible SV (>= 2 history states) and pick the opponent."""
    scores = {}
    for track in s.tracks:
        if track.agent_id == s.ego_id or len(track.states) < 2:
            continue
        scores[track.agent_id] = model.predict(extract_features(s, track.agent_id))
    if not scores:
        raise NoOpponentError("no surrounding vehicle has sufficient history")
    rng = np.random.default_rng(seed)
    return AdversarialScoreSet(
        scores=scores,
        selected=select_from_scores(scores, mode=mode, temperature=temperature, rng=rng),
    )
