"""The full stacking pipeline: base fits, weights, persistence, oracles.

``fit_super_learner`` glues the pieces together: it builds the level-one
matrix, obtains ensemble weights for the configured loss mode (plain
squared error, fixed Huber, or Huber with the robustification parameter
chosen by partial or nested cross-validation), trains the final
full-data base learners, and packs everything into a model that can be
serialized to JSON and reloaded bit-exactly.

``oracle_weights`` is the benchmarking half: given the fold-wise fitted
learners and a callable that draws fresh data from the true generating
process, it finds the weight vector minimizing the Monte Carlo estimate
of the true summed fold risk.  Experiments use it to measure how far the
data-driven weights are from the best weights anyone could have chosen.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._rng import derive_seed
from .cross_validation import LevelOneMatrix, build_level_one
from .errors import ConfigError
from .fileio import atomic_write_text
from .folds import fold_mean_weights
from .learners import FittedLearner, LearnerSpec, fit_with_fallback, predict, validate_spec
from .lambda_selection import (
    LambdaGrid,
    default_lambda_grid,
    nested_cv_select,
    partial_cv_select,
)
from .losses import Huber, Loss, Squared
from .meta import MetaSolveOptions, discrete_select, solve_weights

__all__ = [
    "LOSS_MODES",
    "ENSEMBLE_MODES",
    "SuperLearnerConfig",
    "SuperLearnerModel",
    "fit_super_learner",
    "predict_super_learner",
    "save_model",
    "load_model",
    "model_to_jsonable",
    "model_from_jsonable",
    "OracleRisk",
    "oracle_weights",
]

LOSS_MODES = ("standard-mse", "huber-fixed", "huber-partial-cv", "huber-nested-cv")
ENSEMBLE_MODES = ("convex", "discrete")

MODEL_SCHEMA_VERSION = 1


@dataclass
class SuperLearnerConfig:
    learners: list[LearnerSpec]
    n_folds: int = 10
    loss_mode: str = "standard-mse"
    ensemble_mode: str = "convex"
    huber_lambda: float | None = None  # huber-fixed only
    grid: LambdaGrid | None = None  # None: default grid from the training outcomes
    grid_points: int = 29
    grid_spacing: str = "log"
    inner_folds: int = 10
    seed: int = 0
    stratify_zero: bool = False
    meta_options: MetaSolveOptions = field(default_factory=MetaSolveOptions)


@dataclass
class SuperLearnerModel:
    specs: list[LearnerSpec]
    loss_mode: str
    ensemble_mode: str
    weights: np.ndarray
    huber_lambda: float | None
    full_models: list[FittedLearner]
    seed: int
    n_folds: int
    diagnostics: dict = field(default_factory=dict)
    fit_log: list[dict] = field(default_factory=list)
    feature_names: list[str] | None = None  # set when fitted from a CSV

    @property
    def learner_names(self) -> list[str]:
        return [s.name for s in self.specs]


def _validate_config(config: SuperLearnerConfig, n: int) -> None:
    if config.loss_mode not in LOSS_MODES:
        raise ConfigError(f"loss_mode must be one of {LOSS_MODES}, got {config.loss_mode!r}")
    if config.ensemble_mode not in ENSEMBLE_MODES:
        raise ConfigError(
            f"ensemble_mode must be one of {ENSEMBLE_MODES}, got {config.ensemble_mode!r}"
        )
    if not config.learners:
        raise ConfigError("at least one learner is required")
    for spec in config.learners:
        validate_spec(spec)
    names = [s.name for s in config.learners]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate learner names: {names}")
    if n < 2 * config.n_folds:
        raise ConfigError(f"need n >= 2 * n_folds, got n={n}, n_folds={config.n_folds}")
    if config.loss_mode == "huber-fixed":
        lam = config.huber_lambda
        if lam is None or not np.isfinite(lam) or lam <= 0:
            raise ConfigError(f"huber-fixed needs a positive huber_lambda, got {lam!r}")


def fit_super_learner(X: np.ndarray, y: np.ndarray, config: SuperLearnerConfig) -> SuperLearnerModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    _validate_config(config, y.shape[0])
    specs = config.learners
    seed = config.seed
    level_one = build_level_one(
        X, y, specs, config.n_folds, seed, stratify_zero=config.stratify_zero
    )
    w_folds = fold_mean_weights(level_one.plan)
    opts = config.meta_options
    diagnostics: dict = {}

    def _solve(loss: Loss) -> np.ndarray:
        if config.ensemble_mode == "convex":
            return solve_weights(level_one.Z, y, loss, opts, sample_weight=w_folds)
        return discrete_select(level_one.Z, y, loss, sample_weight=w_folds)

    lam: float | None = None
    if config.loss_mode == "standard-mse":
        weights = _solve(Squared())
    elif config.loss_mode == "huber-fixed":
        lam = float(config.huber_lambda)
        weights = _solve(Huber(lam))
    else:
        grid = config.grid or default_lambda_grid(y, config.grid_points, config.grid_spacing)
        if config.loss_mode == "huber-partial-cv":
            sel = partial_cv_select(level_one, y, grid, config.ensemble_mode, opts)
            weights = sel.weights.copy()
        else:
            res = nested_cv_select(
                X, y, specs, grid, config.n_folds, config.inner_folds, seed,
                mode=config.ensemble_mode, options=opts, outer=level_one,
            )
            sel = res.selection
            weights = res.weights
        lam = sel.chosen_lambda
        diagnostics["lambda_grid"] = [float(v) for v in grid.values]
        diagnostics["selection_criterion"] = [float(c) for c in sel.criterion]
        diagnostics["lambda_index"] = sel.chosen_index

    full_models = [
        fit_with_fallback(spec, X, y, derive_seed(seed, "learner", k, "full"),
                          level_one.fit_log, context="full")
        for k, spec in enumerate(specs)
    ]
    sq = Squared()
    diagnostics["cv_risk_squared"] = {
        s.name: float((w_folds / w_folds.sum()) @ sq.loss(y - level_one.Z[:, k]))
        for k, s in enumerate(specs)
    }
    diagnostics["weights"] = {s.name: float(weights[k]) for k, s in enumerate(specs)}

    return SuperLearnerModel(
        specs=list(specs),
        loss_mode=config.loss_mode,
        ensemble_mode=config.ensemble_mode,
        weights=np.asarray(weights, dtype=float),
        huber_lambda=lam,
        full_models=full_models,
        seed=seed,
        n_folds=config.n_folds,
        diagnostics=diagnostics,
        fit_log=level_one.fit_log,
    )


def predict_super_learner(model: SuperLearnerModel, X: np.ndarray) -> np.ndarray:
    """Weighted combination of the full-data base learner predictions."""
    X = np.asarray(X, dtype=float)
    P = np.column_stack([predict(m, X) for m in model.full_models])
    return P @ model.weights


# ---------------------------------------------------------------------------
# JSON persistence
# ---------------------------------------------------------------------------


def _to_jsonable(obj):
    if isinstance(obj, np.ndarray):
        return {"__array__": {"dtype": str(obj.dtype), "shape": list(obj.shape),
                              "data": obj.ravel().tolist()}}
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _from_jsonable(obj):
    if isinstance(obj, dict):
        if "__array__" in obj and set(obj) == {"__array__"}:
            spec = obj["__array__"]
            return np.array(spec["data"], dtype=spec["dtype"]).reshape(spec["shape"])
        return {k: _from_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_from_jsonable(v) for v in obj]
    return obj


def model_to_jsonable(model: SuperLearnerModel) -> dict:
    return {
        "format": "robuststack-model",
        "schema_version": MODEL_SCHEMA_VERSION,
        "loss_mode": model.loss_mode,
        "ensemble_mode": model.ensemble_mode,
        "seed": model.seed,
        "n_folds": model.n_folds,
        "huber_lambda": model.huber_lambda,
        "weights": _to_jsonable(model.weights),
        "learners": [
            {
                "name": m.spec.name,
                "kind": m.spec.kind,
                "hyperparameters": _to_jsonable(m.spec.hyperparameters),
                "n_features": m.n_features,
                "clamp": list(m.clamp),
                "params": _to_jsonable(m.params),
                "notes": list(m.notes),
            }
            for m in model.full_models
        ],
        "diagnostics": _to_jsonable(model.diagnostics),
        "fit_log": model.fit_log,
        "feature_names": model.feature_names,
    }


def model_from_jsonable(doc: dict) -> SuperLearnerModel:
    if doc.get("format") != "robuststack-model":
        raise ConfigError("not a robuststack model document")
    if doc.get("schema_version") != MODEL_SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported model schema version {doc.get('schema_version')!r} "
            f"(this build reads version {MODEL_SCHEMA_VERSION})"
        )
    full_models = []
    specs = []
    for entry in doc["learners"]:
        spec = LearnerSpec(
            name=entry["name"], kind=entry["kind"],
            hyperparameters=_from_jsonable(entry["hyperparameters"]),
        )
        specs.append(spec)
        full_models.append(
            FittedLearner(
                spec=spec,
                n_features=int(entry["n_features"]),
                clamp=(float(entry["clamp"][0]), float(entry["clamp"][1])),
                params=_from_jsonable(entry["params"]),
                notes=list(entry["notes"]),
            )
        )
    return SuperLearnerModel(
        specs=specs,
        loss_mode=doc["loss_mode"],
        ensemble_mode=doc["ensemble_mode"],
        weights=np.asarray(_from_jsonable(doc["weights"]), dtype=float),
        huber_lambda=doc["huber_lambda"],
        full_models=full_models,
        seed=int(doc["seed"]),
        n_folds=int(doc["n_folds"]),
        diagnostics=_from_jsonable(doc.get("diagnostics", {})),
        fit_log=list(doc.get("fit_log", [])),
        feature_names=doc.get("feature_names"),
    )


def save_model(model: SuperLearnerModel, path: str) -> None:
    atomic_write_text(path, json.dumps(model_to_jsonable(model), indent=1) + "\n")


def load_model(path: str) -> SuperLearnerModel:
    with open(path, encoding="utf-8") as handle:
        return model_from_jsonable(json.load(handle))


# ---------------------------------------------------------------------------
# Oracle weights: the best alpha under the true risk
# ---------------------------------------------------------------------------


@dataclass
class OracleRisk:
    """Monte Carlo estimate of the summed fold risk, reusable per alpha."""

    predictions: np.ndarray  # (V, m, K) fold-model predictions on the MC sample
    y: np.ndarray  # (m,)
    loss: Loss

    def sum_fold_risk(self, alpha: np.ndarray) -> float:
        """sum over folds of the mean MC loss of the alpha-combination."""
        total = 0.0
        for v in range(self.predictions.shape[0]):
            total += float(np.mean(self.loss.loss(self.y - self.predictions[v] @ alpha)))
        return total

    def gap(self, alpha_hat: np.ndarray, alpha_star: np.ndarray) -> tuple[float, float]:
        """Paired risk gap and its Monte Carlo standard error."""
        m = self.y.size
        d = np.zeros(m)
        for v in range(self.predictions.shape[0]):
            pv = self.predictions[v]
            d += self.loss.loss(self.y - pv @ alpha_hat)
            d -= self.loss.loss(self.y - pv @ alpha_star)
        return float(d.mean()), float(d.std(ddof=1) / np.sqrt(m))


def oracle_weights(
    fold_models: list[list[FittedLearner]],
    sample_oracle,
    loss: Loss,
    n_draws: int = 100_000,
    seed: int = 0,
    options: MetaSolveOptions | None = None,
) -> tuple[np.ndarray, OracleRisk]:
    """Weights minimizing the MC-estimated true summed fold risk.

    ``sample_oracle(n, seed)`` must draw a fresh (X, y) sample from the
    true data-generating process.  The same convex solver used for the
    empirical weights runs here on the stacked fold predictions, so the
    comparison is solver-for-solver fair.
    """
    X_mc, y_mc = sample_oracle(n_draws, derive_seed(seed, "oracle"))
    V = len(fold_models)
    K = len(fold_models[0])
    m = y_mc.shape[0]
    preds = np.empty((V, m, K))
    for v in range(V):
        for k in range(K):
            preds[v, :, k] = predict(fold_models[v][k], X_mc)
    stacked = preds.reshape(V * m, K)
    alpha = solve_weights(stacked, np.tile(y_mc, V), loss, options)
    return alpha, OracleRisk(predictions=preds, y=y_mc, loss=loss)
