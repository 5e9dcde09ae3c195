"""Closed-loop adversarial traffic scenario simulation.

Given a recorded scene, score the surrounding vehicles for attack potential,
pick an opponent, and steer it against the ego planner by repeatedly choosing
the opponent trajectory that maximizes factorized collision risk over
predicted opponent/ego trajectory pairs.
"""

from .engine import (
    EpisodeResult,
    SelectionResult,
    SimConfig,
    run_batch,
    run_episode,
    select_adversarial_trajectory,
)
from .errors import AdvSimError
from .geometry import (
    CollisionReport,
    OrientedBox,
    boxes_intersect,
    point_to_polyline_distance,
    trajectory_collision,
)
from .metrics import (
    EfficiencyReport,
    NaturalnessReport,
    acceleration_series,
    evaluate_batch,
    hausdorff,
    kl_divergence,
    sspd,
    wasserstein_1d,
)
from .opponent import (
    AdversarialScoreSet,
    InteractionLabel,
    ScorerModel,
    TrainHyper,
    extract_features,
    focal_loss,
    focal_loss_grad_logit,
    generate_labels,
    score_and_select,
    train_scorer,
)
from .planners import IdmParams, IdmPlanner, PlannerKind, compute_idm_accel, replay_step
from .prediction import (
    HypothesisSet,
    PredictorConfig,
    predict_conditional,
    predict_marginal,
)
from .scenario import (
    AgentTrack,
    MapGraph,
    Pose,
    Scenario,
    TrajectoryHypothesis,
    load_scenario,
    save_scenario,
    slice_observation,
)

__version__ = "0.1.0"
