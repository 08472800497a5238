"""JSON configuration files for the CLI.

Three document shapes are understood: a super learner fitting config, a
prediction experiment config, and an ATE experiment config.  All three
reject unknown keys so typos fail loudly instead of silently running
with defaults.
"""

from __future__ import annotations

import json

import numpy as np

from .dgp import REGIMES, CostScenario, TweedieScenario
from .errors import ConfigError
from .experiments import (
    AteExperimentConfig,
    PredictionExperimentConfig,
    default_ate_learners,
    default_prediction_learners,
)
from .lambda_selection import LambdaGrid
from .learners import LearnerSpec
from .meta import MetaSolveOptions
from .superlearner import SuperLearnerConfig

__all__ = [
    "load_json",
    "super_learner_config_from",
    "prediction_config_from",
    "ate_config_from",
]


def load_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as handle:
            doc = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return doc


def _reject_unknown(doc: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {unknown} (valid: {sorted(allowed)})")


def _int_value(doc, key, default):
    value = doc.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    return value


def _opt_number(doc, key, default=None):
    value = doc.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number, got {value!r}")
    return float(value)


def _str_value(doc, key, default):
    value = doc.get(key, default)
    if not isinstance(value, str):
        raise ConfigError(f"{key} must be a string, got {value!r}")
    return value


def _bool_value(doc, key, default):
    value = doc.get(key, default)
    if not isinstance(value, bool):
        raise ConfigError(f"{key} must be true or false, got {value!r}")
    return value


def _learners_from(doc, default_factory) -> list[LearnerSpec]:
    entries = doc.get("learners")
    if entries is None:
        return default_factory()
    if not isinstance(entries, list) or not entries:
        raise ConfigError("learners must be a nonempty list")
    specs = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ConfigError(f"learners[{i}] must be an object")
        _reject_unknown(entry, {"name", "kind", "hyperparameters"}, f"learners[{i}]")
        if "name" not in entry or "kind" not in entry:
            raise ConfigError(f"learners[{i}] needs 'name' and 'kind'")
        hp = entry.get("hyperparameters", {})
        if not isinstance(hp, dict):
            raise ConfigError(f"learners[{i}].hyperparameters must be an object")
        specs.append(LearnerSpec(name=entry["name"], kind=entry["kind"], hyperparameters=hp))
    return specs


def _meta_options_from(doc) -> MetaSolveOptions:
    meta = doc.get("meta", {})
    if not isinstance(meta, dict):
        raise ConfigError("meta must be an object")
    _reject_unknown(meta, {"max_iterations", "tolerance", "initial_step", "grid_snap_step"},
                    "meta")
    defaults = MetaSolveOptions()
    tolerance = _opt_number(meta, "tolerance", defaults.tolerance)
    initial_step = _opt_number(meta, "initial_step", defaults.initial_step)
    if tolerance is None or initial_step is None:
        raise ConfigError("meta.tolerance and meta.initial_step must be numbers, not null")
    return MetaSolveOptions(
        max_iterations=_int_value(meta, "max_iterations", defaults.max_iterations),
        tolerance=tolerance,
        initial_step=initial_step,
        grid_snap_step=_opt_number(meta, "grid_snap_step", defaults.grid_snap_step),
    )


def _grid_from(doc) -> tuple[LambdaGrid | None, int, str]:
    """Returns (explicit grid, grid_points, grid_spacing)."""
    grid = doc.get("grid")
    points = _int_value(doc, "grid_points", 29)
    spacing = _str_value(doc, "grid_spacing", "log")
    if grid is None:
        return None, points, spacing
    if not isinstance(grid, list) or not grid:
        raise ConfigError("grid must be a nonempty list of positive numbers")
    for v in grid:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"grid values must be numbers, got {v!r}")
    try:
        return LambdaGrid(np.asarray(grid, dtype=float)), points, spacing
    except ValueError as exc:
        raise ConfigError(f"invalid grid: {exc}") from exc


_SL_KEYS = {
    "learners", "n_folds", "loss_mode", "ensemble_mode", "huber_lambda",
    "grid", "grid_points", "grid_spacing", "inner_folds", "seed",
    "stratify_zero", "meta",
}


def super_learner_config_from(doc: dict) -> SuperLearnerConfig:
    _reject_unknown(doc, _SL_KEYS, "config")
    grid, points, spacing = _grid_from(doc)
    return SuperLearnerConfig(
        learners=_learners_from(doc, default_prediction_learners),
        n_folds=_int_value(doc, "n_folds", 10),
        loss_mode=_str_value(doc, "loss_mode", "standard-mse"),
        ensemble_mode=_str_value(doc, "ensemble_mode", "convex"),
        huber_lambda=_opt_number(doc, "huber_lambda"),
        grid=grid,
        grid_points=points,
        grid_spacing=spacing,
        inner_folds=_int_value(doc, "inner_folds", 10),
        seed=_int_value(doc, "seed", 0),
        stratify_zero=_bool_value(doc, "stratify_zero", False),
        meta_options=_meta_options_from(doc),
    )


def _scenario_from(doc, family: str):
    scenario = doc.get("scenario")
    if not isinstance(scenario, dict):
        raise ConfigError("scenario must be an object with 'regime' and 'n_train'")
    _reject_unknown(scenario, {"family", "regime", "n_train"}, "scenario")
    got_family = _str_value(scenario, "family", family)
    if got_family != family:
        raise ConfigError(f"scenario family must be {family!r} here, got {got_family!r}")
    regime = _str_value(scenario, "regime", "")
    if regime not in REGIMES:
        raise ConfigError(f"scenario regime must be one of {REGIMES}, got {regime!r}")
    n_train = _int_value(scenario, "n_train", 1000)
    try:
        if family == "cost":
            return CostScenario(regime=regime, n_train=n_train)
        return TweedieScenario(regime=regime, n_train=n_train)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _estimators_from(doc, default: tuple[str, ...]) -> tuple[str, ...]:
    value = doc.get("estimators")
    if value is None:
        return default
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ConfigError("estimators must be a list of strings")
    return tuple(value)


_EXPERIMENT_KEYS = {
    "scenario", "learners", "estimators", "replications", "n_folds", "inner_folds",
    "grid_points", "grid_spacing", "seed", "workers", "meta",
}


def prediction_config_from(doc: dict) -> PredictionExperimentConfig:
    _reject_unknown(doc, _EXPERIMENT_KEYS | {"test_size"}, "config")
    workers = doc.get("workers")
    return PredictionExperimentConfig(
        scenario=_scenario_from(doc, "cost"),
        learners=_learners_from(doc, default_prediction_learners),
        estimators=_estimators_from(doc, PredictionExperimentConfig.estimators),
        replications=_int_value(doc, "replications", 200),
        test_size=_int_value(doc, "test_size", 5000),
        n_folds=_int_value(doc, "n_folds", 10),
        inner_folds=_int_value(doc, "inner_folds", 10),
        grid_points=_int_value(doc, "grid_points", 15),
        grid_spacing=_str_value(doc, "grid_spacing", "linear"),
        seed=_int_value(doc, "seed", 0),
        workers=None if workers is None else _int_value(doc, "workers", None),
        meta_options=_meta_options_from(doc),
    )


def ate_config_from(doc: dict) -> AteExperimentConfig:
    _reject_unknown(doc, _EXPERIMENT_KEYS | {"true_ate_draws", "fluctuation"}, "config")
    workers = doc.get("workers")
    return AteExperimentConfig(
        scenario=_scenario_from(doc, "tweedie"),
        learners=_learners_from(doc, default_ate_learners),
        estimators=_estimators_from(doc, AteExperimentConfig.estimators),
        replications=_int_value(doc, "replications", 200),
        n_folds=_int_value(doc, "n_folds", 10),
        inner_folds=_int_value(doc, "inner_folds", 10),
        grid_points=_int_value(doc, "grid_points", 15),
        grid_spacing=_str_value(doc, "grid_spacing", "linear"),
        seed=_int_value(doc, "seed", 0),
        workers=None if workers is None else _int_value(doc, "workers", None),
        true_ate_draws=_int_value(doc, "true_ate_draws", 2_000_000),
        fluctuation=_str_value(doc, "fluctuation", "linear"),
        meta_options=_meta_options_from(doc),
    )
