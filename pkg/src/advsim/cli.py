"""Command-line entry point: label, train, generate, evaluate, replay, corpus.

Config precedence is CLI flags > --config file > built-in defaults; every run
echoes its fully resolved configuration (seed included) into the output
directory so reruns are reproducible from emitted artifacts alone.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import corpus as corpus_mod
from .engine import (
    EpisodeResult,
    SimConfig,
    episode_from_dict,
    episode_to_dict,
    run_batch,
)
from .errors import AdvSimError, ConfigError, DataError
from .metrics import evaluate_batch
from .opponent import (
    InteractionLabel,
    TrainHyper,
    extract_features,
    generate_labels,
    load_model,
    save_model,
    train_scorer,
    training_accuracy,
)
from .planners import IdmParams, PlannerKind
from .plots import episode_svg
from .prediction import PredictorConfig
from .scenario import Scenario, load_scenario, slice_observation

log = logging.getLogger("advsim")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4

BATCH_CSV_COLUMNS = [
    "scenario_id",
    "mode",
    "planner",
    "seed",
    "opponent_id",
    "collided",
    "collision_time",
    "collision_relative_speed",
    "collision_agent",
    "collision_with_opponent",
    "n_replans",
    "plan_exhausted",
    "end_of_log",
    "invalid",
    "invalid_reason",
]

METRICS_CSV_COLUMNS = [
    "n_episodes",
    "n_valid",
    "n_collisions",
    "collision_rate",
    "mean_collision_time",
    "mean_relative_speed",
    "mean_generation_time",
    "kl_divergence",
    "wasserstein_distance",
    "sspd",
    "hausdorff",
]


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def load_corpus(path: str | Path) -> list[Scenario]:
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.json"))
        if not files:
            raise DataError(f"no scenario files in {path}")
        return [load_scenario(f) for f in files]
    if path.is_file():
        return [load_scenario(path)]
    raise ConfigError(f"corpus path {path} does not exist")


def _write_json(path: Path, data):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n", encoding="utf-8")


# --- subcommands ---------------------------------------------------------------


def cmd_label(args) -> int:
    scenarios = load_corpus(args.corpus)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    failures = []
    for s in scenarios:
        try:
            for label in generate_labels(s):
                lines.append(
                    json.dumps(
                        {
                            "scenario_id": s.scenario_id,
                            "agent_id": label.agent_id,
                            "positive": label.positive,
                        },
                        sort_keys=True,
                    )
                )
        except AdvSimError as exc:
            failures.append({"scenario_id": s.scenario_id, "error": str(exc)})
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_json(out.with_suffix(out.suffix + ".failures.json"), failures)
    log.info("wrote %d labels (%d failed scenarios)", len(lines), len(failures))
    return EXIT_OK


def _read_labels(path: Path) -> list[dict]:
    if not path.is_file():
        raise ConfigError(f"label file {path} does not exist")
    records = []
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{n}: invalid JSON line ({exc})") from exc
    if not records:
        raise DataError(f"label file {path} is empty")
    return records


def cmd_train(args) -> int:
    records = _read_labels(Path(args.labels))
    scenarios = {s.scenario_id: s for s in load_corpus(args.corpus)}
    hyper = TrainHyper(
        alpha_t=args.alpha,
        gamma=args.gamma,
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        hidden=args.hidden,
    )
    pairs = []
    for rec in records:
        scenario = scenarios.get(rec["scenario_id"])
        if scenario is None:
            raise DataError(f"label references unknown scenario {rec['scenario_id']!r}")
        obs = slice_observation(scenario, scenario.t_first + scenario.history_horizon)
        features = extract_features(obs, rec["agent_id"])
        pairs.append((features, InteractionLabel(rec["agent_id"], rec["positive"])))
    model = train_scorer(pairs, hyper, seed=args.seed)
    save_model(model, args.out)
    _write_json(
        Path(args.out).with_suffix(".train.json"),
        {
            "n_samples": len(pairs),
            "n_positive": sum(1 for _, lab in pairs if lab.positive),
            "accuracy": training_accuracy(model, pairs),
            "loss_curve": list(model.loss_curve),
            "seed": args.seed,
        },
    )
    log.info("trained scorer on %d samples", len(pairs))
    return EXIT_OK


def _sim_config(args, null_adversary: bool) -> SimConfig:
    idm = IdmParams() if args.idm_v0 is None else IdmParams(desired_speed=args.idm_v0)
    return SimConfig(
        mode=args.mode,
        n1=args.n1,
        n2=args.n2,
        planner=PlannerKind(kind=args.planner, idm=idm),
        predictor=replace(
            PredictorConfig(),
            reaction_sensitivity=args.reaction_lambda,
        ),
        select_mode=args.select,
        temperature=args.temperature,
        seed=args.seed,
        null_adversary=null_adversary,
    )


def _write_batch_csv(path: Path, results: list[EpisodeResult], seed: int):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(BATCH_CSV_COLUMNS)
    for r in results:
        writer.writerow(
            [
                _cell(r.scenario_id),
                _cell(r.mode),
                _cell(r.planner_kind),
                _cell(seed),
                _cell(r.opponent_id),
                _cell(r.collision.occurred),
                _cell(r.collision.time),
                _cell(r.collision.relative_speed),
                _cell(r.collision_agent),
                _cell(r.collision_with_opponent),
                _cell(r.n_replans),
                _cell(r.plan_exhausted),
                _cell(r.end_of_log),
                _cell(r.invalid),
                _cell(r.invalid_reason),
            ]
        )
    path.write_text(buf.getvalue(), encoding="utf-8")


def _run_generation(args, null_adversary: bool) -> int:
    scenarios = load_corpus(args.corpus)
    scorer = None
    if args.model is not None:
        scorer = load_model(args.model)
    elif not null_adversary:
        raise ConfigError("generate requires --model (trained opponent scorer)")
    cfg = _sim_config(args, null_adversary)
    out = Path(args.out)
    (out / "episodes").mkdir(parents=True, exist_ok=True)
    (out / "plots").mkdir(parents=True, exist_ok=True)

    t_begin = time.perf_counter()
    results = run_batch(scenarios, cfg, scorer, jobs=args.jobs)
    total = time.perf_counter() - t_begin

    by_id = {s.scenario_id: s for s in scenarios}
    timing = {}
    for r in results:
        _write_json(out / "episodes" / f"{r.scenario_id}.json", episode_to_dict(r))
        timing[r.scenario_id] = r.generation_time
        (out / "plots" / f"{r.scenario_id}.svg").write_text(
            episode_svg(by_id[r.scenario_id], r), encoding="utf-8"
        )
    _write_batch_csv(out / "batch.csv", results, args.seed)
    _write_json(out / "timing.json", {"total_seconds": total, "per_episode": timing})
    _write_json(out / "config.json", _resolved_config(args, null_adversary))
    n_coll = sum(1 for r in results if r.collision.occurred)
    log.info("generated %d episodes (%d collisions)", len(results), n_coll)
    return EXIT_OK


def cmd_generate(args) -> int:
    return _run_generation(args, null_adversary=False)


def cmd_replay(args) -> int:
    return _run_generation(args, null_adversary=True)


def cmd_evaluate(args) -> int:
    results_dir = Path(args.results)
    episode_dir = results_dir / "episodes"
    if not episode_dir.is_dir():
        raise ConfigError(f"{results_dir} does not contain an episodes/ directory")
    timing = {}
    timing_path = results_dir / "timing.json"
    if timing_path.is_file():
        timing = json.loads(timing_path.read_text(encoding="utf-8")).get("per_episode", {})
    results = []
    for path in sorted(episode_dir.glob("*.json")):
        data = json.loads(path.read_text(encoding="utf-8"))
        results.append(episode_from_dict(data, generation_time=timing.get(path.stem, 0.0)))
    if not results:
        raise DataError(f"no episode results in {episode_dir}")
    scenarios = load_corpus(args.corpus)
    efficiency, naturalness = evaluate_batch(results, scenarios)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = {
        "efficiency": {
            "collision_rate": efficiency.collision_rate,
            "mean_collision_time": efficiency.mean_collision_time,
            "mean_relative_speed": efficiency.mean_relative_speed,
            "mean_generation_time": efficiency.mean_generation_time,
            "n_episodes": efficiency.n_episodes,
            "n_valid": efficiency.n_valid,
            "n_collisions": efficiency.n_collisions,
        },
        "naturalness": {
            "kl_divergence": naturalness.kl_divergence,
            "wasserstein_distance": naturalness.wasserstein_distance,
            "sspd": naturalness.sspd,
            "hausdorff": naturalness.hausdorff,
        },
    }
    _write_json(out / "report.json", report)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_CSV_COLUMNS)
    writer.writerow(
        [
            _cell(efficiency.n_episodes),
            _cell(efficiency.n_valid),
            _cell(efficiency.n_collisions),
            _cell(efficiency.collision_rate),
            _cell(efficiency.mean_collision_time),
            _cell(efficiency.mean_relative_speed),
            _cell(efficiency.mean_generation_time),
            _cell(naturalness.kl_divergence),
            _cell(naturalness.wasserstein_distance),
            _cell(naturalness.sspd),
            _cell(naturalness.hausdorff),
        ]
    )
    (out / "metrics.csv").write_text(buf.getvalue(), encoding="utf-8")
    log.info("collision rate %.2f over %d valid episodes", efficiency.collision_rate, efficiency.n_valid)
    return EXIT_OK


def cmd_corpus(args) -> int:
    paths = corpus_mod.write_corpus(args.out, seed=args.seed)
    log.info("wrote %d fixture scenarios to %s", len(paths), args.out)
    return EXIT_OK


# --- argument plumbing -----------------------------------------------------------

_GENERATE_DEFAULTS = {
    "mode": "s1",
    "planner": "replay",
    "seed": 0,
    "n1": 6,
    "n2": 6,
    "reaction_lambda": 0.05,
    "temperature": 0.1,
    "select": "argmax",
    "jobs": 1,
    "idm_v0": None,
    "model": None,
}

_TRAIN_DEFAULTS = {
    "alpha": 0.25,
    "gamma": 2.0,
    "learning_rate": 0.5,
    "epochs": 400,
    "hidden": 16,
    "seed": 0,
}


def _add_generate_flags(p: argparse.ArgumentParser):
    p.add_argument("--corpus", required=True, help="scenario file or directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--model", help="trained scorer model file")
    p.add_argument("--mode", choices=["g", "s1", "s2", "s4"])
    p.add_argument("--planner", choices=["replay", "idm"])
    p.add_argument("--seed", type=int)
    p.add_argument("--n1", type=int)
    p.add_argument("--n2", type=int)
    p.add_argument("--lambda", dest="reaction_lambda", type=float,
                   help="ego reaction sensitivity")
    p.add_argument("--temperature", type=float)
    p.add_argument("--select", choices=["argmax", "sample"])
    p.add_argument("--jobs", type=int)
    p.add_argument("--idm-v0", dest="idm_v0", type=float,
                   help="IDM desired speed override (m/s)")
    p.add_argument("--config", help="JSON config file (flags take precedence)")


def _apply_config_file(args, defaults: dict):
    file_values = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        try:
            file_values = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid config file {path}: {exc}") from exc
        unknown = set(file_values) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key, default in defaults.items():
        if getattr(args, key, None) is None:
            setattr(args, key, file_values.get(key, default))


def _resolved_config(args, null_adversary: bool) -> dict:
    resolved = {key: getattr(args, key) for key in _GENERATE_DEFAULTS}
    resolved.update(
        {
            "corpus": str(args.corpus),
            "out": str(args.out),
            "null_adversary": null_adversary,
        }
    )
    return resolved


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="advsim",
        description="Adversarial safety-critical traffic scenario simulation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("corpus", help="write the synthetic fixture corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_corpus)

    p = sub.add_parser("label", help="generate heuristic interaction labels")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="output JSON-lines label file")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train", help="train the adversarial scorer")
    p.add_argument("--labels", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="output model file")
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train, _defaults=_TRAIN_DEFAULTS)

    p = sub.add_parser("generate", help="run adversarial episodes over a corpus")
    _add_generate_flags(p)
    p.set_defaults(func=cmd_generate, _defaults=_GENERATE_DEFAULTS)

    p = sub.add_parser("replay", help="null-adversary baseline (log replay)")
    _add_generate_flags(p)
    p.set_defaults(func=cmd_replay, _defaults=_GENERATE_DEFAULTS)

    p = sub.add_parser("evaluate", help="efficiency + naturalness reports")
    p.add_argument("--results", required=True, help="generate/replay output directory")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("ADVSIM_LOG", "WARNING").upper())
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        defaults = getattr(args, "_defaults", None)
        if defaults is not None:
            _apply_config_file(args, defaults)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AdvSimError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
