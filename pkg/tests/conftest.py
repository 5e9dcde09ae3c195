import numpy as np
import pytest

from advsim.corpus import build_corpus
from advsim.engine import SimConfig, run_batch
from advsim.opponent import extract_features, generate_labels, train_scorer
from advsim.planners import PlannerKind
from advsim.scenario import slice_observation


@pytest.fixture(scope="session")
def corpus():
    return build_corpus(seed=7)


@pytest.fixture(scope="session")
def corpus_by_id(corpus):
    return {s.scenario_id: s for s in corpus}


@pytest.fixture(scope="session")
def labeled_pairs(corpus):
    pairs = []
    for s in corpus:
        obs = slice_observation(s, s.t_first + s.history_horizon)
        for label in generate_labels(s):
            pairs.append((extract_features(obs, label.agent_id), label))
    return pairs


@pytest.fixture(scope="session")
def scorer(labeled_pairs):
    return train_scorer(labeled_pairs, seed=0)


@pytest.fixture(scope="session")
def idm_batches(corpus, scorer):
    """S1/S4/null-adversary runs with the IDM planner, shared by acceptance tests."""
    runs = {}
    for mode in ("s1", "s4"):
        cfg = SimConfig(mode=mode, planner=PlannerKind(kind="idm"), seed=0)
        runs[mode] = run_batch(corpus, cfg, scorer)
    runs["null"] = run_batch(
        corpus,
        SimConfig(mode="s1", planner=PlannerKind(kind="replay"), null_adversary=True, seed=0),
        scorer,
    )
    return runs


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
