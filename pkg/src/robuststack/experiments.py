"""Monte Carlo experiment runners for the two built-in studies.

The prediction experiment draws a training sample from a two-stage cost
scenario, fits all requested estimator variants on shared base-learner
fits, and scores them on a fresh test sample.  The causal experiment
draws a Tweedie outcome with the first covariate as randomized
treatment, fits three super learner outcome regressions (again on shared
base fits), and targets each of them into an ATE estimate next to the
unadjusted difference in means.

Replications are independent tasks with seeds derived from the
experiment seed and the replication index, so reports are bit-identical
across reruns and across worker counts.  Failed replications are
recorded and excluded from the aggregates.
"""

from __future__ import annotations

import concurrent.futures
import functools
import hashlib
import json
import multiprocessing
import os
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

import numpy as np

from ._rng import derive_seed
from ._version import __version__
from .cross_validation import build_level_one
from .dgp import CostScenario, TweedieScenario, true_ate
from .errors import ConfigError
from .folds import fold_mean_weights
from .lambda_selection import LambdaGrid, _nested_criteria, default_lambda_grid, partial_cv_select
from .learners import LearnerSpec, fit_with_fallback, predict, validate_spec
from .losses import Huber, Squared
from .meta import MetaSolveOptions, discrete_select, solve_weights
from .metrics import score
from .tmle import fit_propensity, tmle_from_predictions, unadjusted_ate

__all__ = [
    "PREDICTION_ESTIMATORS",
    "ATE_ESTIMATORS",
    "PredictionExperimentConfig",
    "AteExperimentConfig",
    "ExperimentReport",
    "default_prediction_learners",
    "default_ate_learners",
    "run_prediction_experiment",
    "run_ate_experiment",
    "resolve_workers",
]

# {ensemble, discrete} x {squared loss, Huber with partial-CV lambda,
# Huber with nested-CV lambda}; the per-family "standard" column is the
# baseline for the relative metrics.
PREDICTION_ESTIMATORS = (
    "ensemble-standard",
    "ensemble-huber-partial",
    "ensemble-huber-nested",
    "discrete-standard",
    "discrete-huber-partial",
    "discrete-huber-nested",
)

# The causal study compares the unadjusted arm-mean difference with three
# TMLEs whose outcome regressions differ only in how the ensemble weights
# were obtained.  Relative MSE is against tmle-standard.
ATE_ESTIMATORS = (
    "unadjusted",
    "tmle-standard",
    "tmle-huber-partial",
    "tmle-huber-nested",
)

WORKERS_ENV_VAR = "ROBUSTSTACK_MAX_WORKERS"


def default_prediction_learners() -> list[LearnerSpec]:
    """Registry for the zero-inflated cost study.

    A two-stage hurdle model (logistic zero part, lasso positive part)
    plus a stable and a deliberately noisy regression tree.  The mix
    keeps learners whose errors respond differently to heavy tails,
    which is where a robust meta-learner can actually help.
    """
    return [
        LearnerSpec(name="two-stage", kind="TwoStage",
                    hyperparameters={"stage2": {"kind": "Lasso"}}),
        LearnerSpec(name="tree", kind="RegressionTree", hyperparameters={"min_leaf": 10}),
        LearnerSpec(name="tree-deep", kind="RegressionTree", hyperparameters={"min_leaf": 2}),
    ]


def default_ate_learners() -> list[LearnerSpec]:
    return [
        LearnerSpec(name="mean", kind="Mean"),
        LearnerSpec(name="ols", kind="OLS"),
        LearnerSpec(name="lasso", kind="Lasso"),
        LearnerSpec(name="tree", kind="RegressionTree", hyperparameters={"min_leaf": 20}),
    ]


@dataclass
class PredictionExperimentConfig:
    scenario: CostScenario
    learners: list[LearnerSpec] = field(default_factory=default_prediction_learners)
    estimators: tuple[str, ...] = PREDICTION_ESTIMATORS
    replications: int = 200
    test_size: int = 5000
    n_folds: int = 10
    inner_folds: int = 10
    # Evenly spaced grid: candidates sit between the typical outcome scale
    # and max|y|, so a noisy inner criterion cannot wander into the tiny-λ
    # region where the ensemble degenerates to a median-style fit.
    grid_points: int = 15
    grid_spacing: str = "linear"
    seed: int = 0
    workers: int | None = None
    meta_options: MetaSolveOptions = field(default_factory=MetaSolveOptions)


@dataclass
class AteExperimentConfig:
    scenario: TweedieScenario
    learners: list[LearnerSpec] = field(default_factory=default_ate_learners)
    estimators: tuple[str, ...] = ATE_ESTIMATORS
    replications: int = 200
    n_folds: int = 10
    inner_folds: int = 10
    grid_points: int = 15
    grid_spacing: str = "linear"
    seed: int = 0
    workers: int | None = None
    true_ate_draws: int = 2_000_000
    fluctuation: str = "linear"
    meta_options: MetaSolveOptions = field(default_factory=MetaSolveOptions)


@dataclass
class ExperimentReport:
    rows: list[tuple[str, str, str, float]]
    manifest: dict
    failures: list[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Shared plumbing
# ---------------------------------------------------------------------------


def resolve_workers(requested: int | None, replications: int) -> int:
    """Worker count from the config, the machine, and the env cap."""
    if requested is not None and requested < 1:
        raise ConfigError(f"workers must be >= 1, got {requested}")
    workers = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.environ.get(WORKERS_ENV_VAR)
    if cap is not None:
        try:
            cap_value = int(cap)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV_VAR} must be an integer, got {cap!r}") from None
        if cap_value < 1:
            raise ConfigError(f"{WORKERS_ENV_VAR} must be >= 1, got {cap_value}")
        workers = min(workers, cap_value)
    return max(1, min(workers, replications))


def _validate_common(config, estimators_allowed: tuple[str, ...]) -> None:
    if config.replications < 1:
        raise ConfigError(f"replications must be >= 1, got {config.replications}")
    if not config.estimators:
        raise ConfigError("at least one estimator is required")
    unknown = [e for e in config.estimators if e not in estimators_allowed]
    if unknown:
        raise ConfigError(f"unknown estimators {unknown}; valid: {list(estimators_allowed)}")
    if len(set(config.estimators)) != len(config.estimators):
        raise ConfigError(f"duplicate estimators: {list(config.estimators)}")
    if not config.learners:
        raise ConfigError("at least one learner is required")
    for spec in config.learners:
        validate_spec(spec)
    names = [s.name for s in config.learners]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate learner names: {names}")
    if config.n_folds < 2 or config.inner_folds < 2:
        raise ConfigError(
            f"n_folds and inner_folds must be >= 2, got {config.n_folds}, {config.inner_folds}"
        )
    if config.grid_points < 1:
        raise ConfigError(f"grid_points must be >= 1, got {config.grid_points}")
    if config.grid_spacing not in ("log", "linear"):
        raise ConfigError(f"grid_spacing must be 'log' or 'linear', got {config.grid_spacing!r}")


def _safe_rep(fn, config, rep: int) -> dict:
    try:
        return fn(config, rep)
    except Exception as exc:  # replication isolation: record, never abort the study
        return {"error": f"{type(exc).__name__}: {exc}"}


def _map_replications(task, replications: int, workers: int) -> list[dict]:
    if workers <= 1:
        return [task(r) for r in range(replications)]
    try:
        ctx = multiprocessing.get_context("fork")
    except ValueError:
        ctx = multiprocessing.get_context()
    results: list[dict | None] = [None] * replications
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        futures = {pool.submit(task, r): r for r in range(replications)}
        for future in concurrent.futures.as_completed(futures):
            results[futures[future]] = future.result()
    return results


def _solve_variants(level_one, X, y, specs, variants, grid, inner_folds, seed, options):
    """Ensemble weights for every (mode, variant) pair on shared fits.

    ``variants`` maps estimator label -> (mode, variant) with mode in
    {convex, discrete} and variant in {standard, huber-partial,
    huber-nested}.  Nested-CV inner matrices are built once and scored
    for every mode that asks for them.
    """
    Z = level_one.Z
    w = fold_mean_weights(level_one.plan)
    weights: dict[str, np.ndarray] = {}
    lambdas: dict[str, float] = {}
    indices: dict[str, int] = {}
    criteria: dict[str, np.ndarray] = {}

    def _solve(mode, loss):
        if mode == "convex":
            return solve_weights(Z, y, loss, options, sample_weight=w)
        return discrete_select(Z, y, loss, sample_weight=w)

    nested_modes = tuple(
        dict.fromkeys(mode for mode, variant in variants.values() if variant == "huber-nested")
    )
    nested_crit: dict[str, np.ndarray] = {}
    if nested_modes and len(grid) > 1:
        nested_crit = _nested_criteria(
            X, y, specs, grid, inner_folds, seed, nested_modes, options, level_one
        )

    for label, (mode, variant) in variants.items():
        if variant == "standard":
            weights[label] = _solve(mode, Squared())
        elif variant == "huber-partial":
            sel = partial_cv_select(level_one, y, grid, mode, options)
            weights[label] = sel.weights.copy()
            lambdas[label] = sel.chosen_lambda
            indices[label] = sel.chosen_index
            criteria[label] = sel.criterion
        else:  # huber-nested
            if len(grid) == 1:
                chosen = 0
                crit = np.zeros(1)
            else:
                crit = nested_crit[mode]
                chosen = int(np.argmin(crit))
            lam = float(grid.values[chosen])
            weights[label] = _solve(mode, Huber(lam))
            lambdas[label] = lam
            indices[label] = chosen
            criteria[label] = crit
    return weights, lambdas, indices, criteria


def _fit_full_models(X, y, specs, seed, fit_log):
    return [
        fit_with_fallback(spec, X, y, derive_seed(seed, "learner", k, "full"),
                          fit_log, context="full")
        for k, spec in enumerate(specs)
    ]


def _count_fallbacks(fit_log) -> int:
    return sum(1 for entry in fit_log if entry.get("event") == "fallback_to_mean")


def _json_default(value):
    if isinstance(value, (np.integer, np.floating)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def _build_manifest(kind: str, config, workers: int, failed: int, elapsed: float) -> dict:
    payload = asdict(config)
    payload.pop("workers", None)  # runtime knob, not part of the statistical config
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=_json_default)
    return {
        "tool": "robuststack",
        "version": __version__,
        "experiment": kind,
        "scenario": config.scenario.label,
        "seed": config.seed,
        "replications": config.replications,
        "failed_replications": failed,
        "workers": workers,
        "config": json.loads(canonical),
        "config_digest": hashlib.sha256(canonical.encode("utf-8")).hexdigest(),
        "elapsed_seconds": round(elapsed, 3),
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def _mean(values) -> float:
    return float(np.mean(np.asarray(values, dtype=float)))


def _criterion_rows(label, est, curves, n_train) -> list[tuple[str, str, str, float]]:
    """Mean per-grid-index selection MSE, for diagnostics only."""
    lengths = {len(c) for c in curves}
    if len(lengths) != 1:
        return []  # ragged grids (degenerate outcome scale); skip the curve
    stacked = np.vstack([np.asarray(c, dtype=float) for c in curves])
    means = stacked.mean(axis=0) / n_train
    return [
        (label, est, f"selection_mse_j{j + 1:02d}", float(means[j]))
        for j in range(means.size)
    ]


# ---------------------------------------------------------------------------
# Prediction experiment
# ---------------------------------------------------------------------------


def _prediction_variants(estimators) -> dict[str, tuple[str, str]]:
    out = {}
    for est in estimators:
        family, _, variant = est.partition("-")
        out[est] = ("convex" if family == "ensemble" else "discrete", variant)
    return out


def _prediction_rep(config: PredictionExperimentConfig, rep: int) -> dict:
    scenario = config.scenario
    seed = config.seed
    X, y = scenario.sample(scenario.n_train, derive_seed(seed, "rep", rep, "train"))
    X_test, y_test = scenario.sample(config.test_size, derive_seed(seed, "rep", rep, "test"))
    sl_seed = derive_seed(seed, "rep", rep)
    specs = config.learners
    level_one = build_level_one(X, y, specs, config.n_folds, sl_seed)
    grid = default_lambda_grid(y, config.grid_points, config.grid_spacing)
    variants = _prediction_variants(config.estimators)
    weights, lambdas, indices, criteria = _solve_variants(
        level_one, X, y, specs, variants, grid, config.inner_folds, sl_seed,
        config.meta_options,
    )
    full_models = _fit_full_models(X, y, specs, sl_seed, level_one.fit_log)
    P = np.column_stack([predict(m, X_test) for m in full_models])
    scores = {est: score(P @ weights[est], y_test) for est in config.estimators}
    return {
        "scores": scores,
        "lambdas": lambdas,
        "lambda_indices": indices,
        "criteria": {est: crit.tolist() for est, crit in criteria.items()},
        "fallbacks": _count_fallbacks(level_one.fit_log),
    }


def _aggregate_prediction(config: PredictionExperimentConfig, results: list[dict]):
    label = config.scenario.label
    ok = [r for r in results if "error" not in r]
    failures = [r["error"] for r in results if "error" in r]
    rows: list[tuple[str, str, str, float]] = [
        (label, "summary", "replications", float(config.replications)),
        (label, "summary", "failed_replications", float(len(failures))),
        (label, "summary", "fallback_fits", float(sum(r["fallbacks"] for r in ok))),
    ]
    if not ok:
        return rows, failures

    mse_mean = {est: _mean([r["scores"][est]["mse"] for r in ok]) for est in config.estimators}
    mae_mean = {est: _mean([r["scores"][est]["mae"] for r in ok]) for est in config.estimators}
    r2_mean: dict[str, float | None] = {}
    for est in config.estimators:
        vals = [r["scores"][est]["r2"] for r in ok if r["scores"][est]["r2"] is not None]
        r2_mean[est] = _mean(vals) if vals else None

    for est in config.estimators:
        family, _, variant = est.partition("-")
        baseline = f"{family}-standard"
        rows.append((label, est, "mse", mse_mean[est]))
        if variant != "standard" and baseline in mse_mean and mse_mean[baseline] > 0:
            rows.append((label, est, "relative_mse", mse_mean[est] / mse_mean[baseline]))
        rows.append((label, est, "mae", mae_mean[est]))
        if r2_mean[est] is not None:
            rows.append((label, est, "r2", r2_mean[est]))
            if (variant != "standard" and r2_mean.get(baseline) not in (None, 0.0)
                    and r2_mean[baseline] is not None):
                rows.append((label, est, "re", r2_mean[est] / r2_mean[baseline]))
        if variant != "standard":
            lams = [r["lambdas"][est] for r in ok if est in r["lambdas"]]
            idxs = [r["lambda_indices"][est] for r in ok if est in r["lambda_indices"]]
            if lams:
                rows.append((label, est, "lambda_median", float(np.median(lams))))
                rows.append((label, est, "lambda_index_mean", _mean(idxs)))
            curves = [r["criteria"][est] for r in ok if est in r["criteria"]]
            if curves:
                rows.extend(_criterion_rows(label, est, curves, config.scenario.n_train))
    return rows, failures


def run_prediction_experiment(config: PredictionExperimentConfig) -> ExperimentReport:
    """Replicate the cost-prediction study for one scenario.

    Returns long-format report rows (scenario, estimator, metric, value)
    plus a manifest documenting seed, configuration digest, and timing.
    """
    if not isinstance(config.scenario, CostScenario):
        raise ConfigError("prediction experiments need a CostScenario")
    _validate_common(config, PREDICTION_ESTIMATORS)
    if config.test_size < 2:
        raise ConfigError(f"test_size must be >= 2, got {config.test_size}")
    if config.scenario.n_train < 2 * config.n_folds:
        raise ConfigError(
            f"need n_train >= 2 * n_folds, got {config.scenario.n_train} vs {config.n_folds}"
        )
    workers = resolve_workers(config.workers, config.replications)
    start = time.monotonic()
    task = functools.partial(_safe_rep, _prediction_rep, config)
    results = _map_replications(task, config.replications, workers)
    rows, failures = _aggregate_prediction(config, results)
    manifest = _build_manifest("prediction", config, workers, len(failures),
                               time.monotonic() - start)
    return ExperimentReport(rows=rows, manifest=manifest, failures=failures)


# ---------------------------------------------------------------------------
# ATE experiment
# ---------------------------------------------------------------------------


def _ate_variants(estimators) -> dict[str, tuple[str, str]]:
    out = {}
    for est in estimators:
        if est == "unadjusted":
            continue
        out[est] = ("convex", est[len("tmle-"):])
    return out


def _ate_rep(config: AteExperimentConfig, rep: int) -> dict:
    scenario = config.scenario
    seed = config.seed
    X, y = scenario.sample(scenario.n_train, derive_seed(seed, "rep", rep, "train"))
    a = X[:, 0]
    X_adj = X[:, 1:5]  # the prognostic covariates; the rest is noise
    sl_seed = derive_seed(seed, "rep", rep)
    specs = config.learners

    out: dict = {"estimates": {}, "epsilons": {}, "scores_abs": {},
                 "lambdas": {}, "lambda_indices": {}, "criteria": {}, "fallbacks": 0}
    if "unadjusted" in config.estimators:
        out["estimates"]["unadjusted"] = unadjusted_ate(y, a).estimate

    variants = _ate_variants(config.estimators)
    if variants:
        feats = np.column_stack([a, X_adj])  # treatment first, per the TMLE contract
        level_one = build_level_one(feats, y, specs, config.n_folds, sl_seed)
        grid = default_lambda_grid(y, config.grid_points, config.grid_spacing)
        weights, lambdas, indices, criteria = _solve_variants(
            level_one, feats, y, specs, variants, grid, config.inner_folds, sl_seed,
            config.meta_options,
        )
        full_models = _fit_full_models(feats, y, specs, sl_seed, level_one.fit_log)
        P_obs = np.column_stack([predict(m, feats) for m in full_models])
        feats1 = feats.copy()
        feats1[:, 0] = 1.0
        P1 = np.column_stack([predict(m, feats1) for m in full_models])
        feats1[:, 0] = 0.0
        P0 = np.column_stack([predict(m, feats1) for m in full_models])
        g1 = fit_propensity(X_adj, a).probabilities(X_adj)
        for est in variants:
            alpha = weights[est]
            res = tmle_from_predictions(y, a, P_obs @ alpha, P1 @ alpha, P0 @ alpha, g1,
                                        fluctuation=config.fluctuation)
            out["estimates"][est] = res.estimate
            out["epsilons"][est] = res.epsilon
            out["scores_abs"][est] = abs(res.diagnostics["score"])
            if est in lambdas:
                out["lambdas"][est] = lambdas[est]
                out["lambda_indices"][est] = indices[est]
                out["criteria"][est] = criteria[est].tolist()
        out["fallbacks"] = _count_fallbacks(level_one.fit_log)
    return out


def _aggregate_ate(config: AteExperimentConfig, results: list[dict], truth: float):
    label = config.scenario.label
    ok = [r for r in results if "error" not in r]
    failures = [r["error"] for r in results if "error" in r]
    rows: list[tuple[str, str, str, float]] = [
        (label, "summary", "replications", float(config.replications)),
        (label, "summary", "failed_replications", float(len(failures))),
        (label, "summary", "fallback_fits", float(sum(r["fallbacks"] for r in ok))),
        (label, "summary", "true_ate", truth),
    ]
    if not ok:
        return rows, failures

    mse_mean = {}
    for est in config.estimators:
        estimates = np.array([r["estimates"][est] for r in ok], dtype=float)
        mse_mean[est] = float(np.mean((estimates - truth) ** 2))
    baseline = mse_mean.get("tmle-standard")

    for est in config.estimators:
        estimates = np.array([r["estimates"][est] for r in ok], dtype=float)
        bias = float(estimates.mean() - truth)
        rows.append((label, est, "bias", bias))
        if estimates.size > 1:
            rows.append((label, est, "variance", float(estimates.var(ddof=1))))
            rows.append((label, est, "bias_mc_se",
                         float(estimates.std(ddof=1) / np.sqrt(estimates.size))))
        rows.append((label, est, "mse", mse_mean[est]))
        if baseline is not None and baseline > 0 and est != "tmle-standard":
            rows.append((label, est, "relative_mse", mse_mean[est] / baseline))
        if est.startswith("tmle-"):
            rows.append((label, est, "epsilon_mean",
                         _mean([r["epsilons"][est] for r in ok])))
            rows.append((label, est, "score_abs_max",
                         float(max(r["scores_abs"][est] for r in ok))))
        lams = [r["lambdas"][est] for r in ok if est in r["lambdas"]]
        if lams:
            idxs = [r["lambda_indices"][est] for r in ok if est in r["lambda_indices"]]
            rows.append((label, est, "lambda_median", float(np.median(lams))))
            rows.append((label, est, "lambda_index_mean", _mean(idxs)))
            curves = [r["criteria"][est] for r in ok if est in r["criteria"]]
            if curves:
                rows.extend(_criterion_rows(label, est, curves, config.scenario.n_train))
    return rows, failures


def run_ate_experiment(config: AteExperimentConfig) -> ExperimentReport:
    """Replicate the ATE study for one Tweedie scenario."""
    if not isinstance(config.scenario, TweedieScenario):
        raise ConfigError("ATE experiments need a TweedieScenario")
    _validate_common(config, ATE_ESTIMATORS)
    if config.fluctuation not in ("linear", "logistic"):
        raise ConfigError(f"fluctuation must be 'linear' or 'logistic', got {config.fluctuation!r}")
    if config.true_ate_draws < 1:
        raise ConfigError(f"true_ate_draws must be >= 1, got {config.true_ate_draws}")
    if config.scenario.n_train < 2 * config.n_folds:
        raise ConfigError(
            f"need n_train >= 2 * n_folds, got {config.scenario.n_train} vs {config.n_folds}"
        )
    workers = resolve_workers(config.workers, config.replications)
    start = time.monotonic()
    truth = true_ate(config.scenario, config.true_ate_draws, config.seed)
    task = functools.partial(_safe_rep, _ate_rep, config)
    results = _map_replications(task, config.replications, workers)
    rows, failures = _aggregate_ate(config, results, truth)
    manifest = _build_manifest("ate", config, workers, len(failures),
                               time.monotonic() - start)
    manifest["true_ate"] = truth
    return ExperimentReport(rows=rows, manifest=manifest, failures=failures)
