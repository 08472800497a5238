"""Base learner registry.

Every learner is trained through ``fit(spec, X, y, seed)`` and produces a
``FittedLearner`` whose predictions are clamped to a band around the
training outcome range, so no base learner can extrapolate wildly on new
covariates.  Learners that fail on a training split are replaced by the
training-mean predictor and the event is recorded, never raised, because
one fragile learner must not take down a whole cross-validation run.

The registry deliberately sticks to small, deterministic components:

    Mean, OLS, Ridge, Lasso, KNN, RegressionTree, RandomForest,
    LogisticGLM, TwoStage

TwoStage is the zero-inflated cost learner: a classifier for
P(Y > 0 | X) times a regressor for E[Y | Y > 0, X].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import trees
from ._lasso import cd_path
from ._rng import derive_seed, rng_for
from .errors import ConfigError
from .folds import make_folds

__all__ = [
    "LEARNER_KINDS",
    "LearnerSpec",
    "FittedLearner",
    "validate_spec",
    "fit",
    "predict",
    "fit_with_fallback",
    "fit_count",
    "reset_fit_count",
]

LEARNER_KINDS = (
    "Mean",
    "OLS",
    "Ridge",
    "Lasso",
    "KNN",
    "RegressionTree",
    "RandomForest",
    "LogisticGLM",
    "TwoStage",
)

# Fixed solver constants (not hyperparameters).
_OLS_FALLBACK_PENALTY = 1e-8
_LASSO_TOL = 1e-7
_LASSO_MAX_SWEEPS = 10_000
_LASSO_CV_FOLDS = 5
_LASSO_CV_GRID = 50
_LASSO_CV_RATIO = 1e-4
_LOGIT_RIDGE = 1e-6
_LOGIT_MAX_ITER = 50
_LOGIT_TOL = 1e-8

_fit_calls = 0


def fit_count() -> int:
    """Number of registry-level ``fit`` invocations in this process."""
    return _fit_calls


def reset_fit_count() -> None:
    global _fit_calls
    _fit_calls = 0


@dataclass(frozen=True)
class LearnerSpec:
    name: str
    kind: str
    hyperparameters: dict = field(default_factory=dict)


@dataclass
class FittedLearner:
    spec: LearnerSpec
    n_features: int
    clamp: tuple[float, float]
    params: dict
    notes: list[str] = field(default_factory=list)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return predict(self, X)


def validate_spec(spec: LearnerSpec) -> None:
    """Reject unknown kinds and out-of-range hyperparameters."""
    if spec.kind not in LEARNER_KINDS:
        raise ConfigError(f"unknown learner kind {spec.kind!r} (valid: {', '.join(LEARNER_KINDS)})")
    if not spec.name:
        raise ConfigError("learner name must be nonempty")
    hp = spec.hyperparameters
    if not isinstance(hp, dict):
        raise ConfigError(f"learner {spec.name!r}: hyperparameters must be a mapping")

    def _check_num(key, lo=None, allow_none=False, integer=False):
        if key not in hp:
            return
        v = hp[key]
        if v is None:
            if allow_none:
                return
            raise ConfigError(f"learner {spec.name!r}: {key} must not be null")
        if integer and not isinstance(v, (int, np.integer)):
            raise ConfigError(f"learner {spec.name!r}: {key} must be an integer, got {v!r}")
        if not isinstance(v, (int, float, np.integer, np.floating)) or isinstance(v, bool):
            raise ConfigError(f"learner {spec.name!r}: {key} must be numeric, got {v!r}")
        if not np.isfinite(v):
            raise ConfigError(f"learner {spec.name!r}: {key} must be finite")
        if lo is not None and v < lo:
            raise ConfigError(f"learner {spec.name!r}: {key} must be >= {lo}, got {v}")

    allowed = {
        "Mean": set(),
        "OLS": set(),
        "Ridge": {"penalty"},
        "Lasso": {"penalty"},
        "KNN": {"k", "standardize"},
        "RegressionTree": {"max_depth", "min_leaf"},
        "RandomForest": {"n_trees", "mtry", "min_leaf", "max_depth", "bootstrap"},
        "LogisticGLM": set(),
        "TwoStage": {"stage1", "stage2"},
    }[spec.kind]
    extra = set(hp) - allowed
    if extra:
        raise ConfigError(
            f"learner {spec.name!r}: unsupported hyperparameters for {spec.kind}: {sorted(extra)}"
        )
    if spec.kind == "Ridge":
        _check_num("penalty", lo=0.0)
    elif spec.kind == "Lasso":
        _check_num("penalty", lo=0.0, allow_none=True)
    elif spec.kind == "KNN":
        _check_num("k", lo=1, integer=True)
        if "standardize" in hp and not isinstance(hp["standardize"], bool):
            raise ConfigError(f"learner {spec.name!r}: standardize must be a boolean")
    elif spec.kind == "RegressionTree":
        _check_num("max_depth", lo=1, allow_none=True, integer=True)
        _check_num("min_leaf", lo=1, integer=True)
    elif spec.kind == "RandomForest":
        _check_num("n_trees", lo=1, integer=True)
        _check_num("mtry", lo=1, allow_none=True, integer=True)
        _check_num("min_leaf", lo=1, integer=True)
        _check_num("max_depth", lo=1, allow_none=True, integer=True)
        if "bootstrap" in hp and not isinstance(hp["bootstrap"], bool):
            raise ConfigError(f"learner {spec.name!r}: bootstrap must be a boolean")
    elif spec.kind == "TwoStage":
        for stage_key, default_kind in (("stage1", "LogisticGLM"), ("stage2", "OLS")):
            sub = hp.get(stage_key)
            if sub is None:
                continue
            if not isinstance(sub, dict) or "kind" not in sub:
                raise ConfigError(
                    f"learner {spec.name!r}: {stage_key} must be a mapping with a 'kind'"
                )
            if sub["kind"] == "TwoStage":
                raise ConfigError(f"learner {spec.name!r}: {stage_key} cannot itself be TwoStage")
            validate_spec(
                LearnerSpec(
                    name=f"{spec.name}.{stage_key}",
                    kind=sub["kind"],
                    hyperparameters=sub.get("hyperparameters", {}),
                )
            )


# ---------------------------------------------------------------------------
# Shared numerics
# ---------------------------------------------------------------------------


def _expit(eta: np.ndarray) -> np.ndarray:
    eta = np.clip(eta, -35.0, 35.0)
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _ridge_solve(X: np.ndarray, y: np.ndarray, penalty: float) -> tuple[float, np.ndarray]:
    """Intercept plus slopes; penalty applies to slopes only."""
    mu = X.mean(axis=0)
    ybar = float(y.mean())
    Xc = X - mu
    yc = y - ybar
    if penalty == 0.0:
        coef, *_ = np.linalg.lstsq(Xc, yc, rcond=None)
    else:
        G = Xc.T @ Xc + penalty * np.eye(X.shape[1])
        coef = np.linalg.solve(G, Xc.T @ yc)
    return ybar - float(mu @ coef), coef


def _logistic_irls(X: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Penalized logistic regression coefficients [intercept, slopes].

    Newton-Raphson on the log-likelihood with an L2 penalty of
    ``_LOGIT_RIDGE`` on the slopes, which keeps separated data from
    diverging while leaving the intercept score equation exact.
    """
    n, p = X.shape
    A = np.column_stack([np.ones(n), X])
    beta = np.zeros(p + 1)
    pen = np.zeros(p + 1)
    pen[1:] = _LOGIT_RIDGE

    def pll(b):
        eta = A @ b
        return float(z @ eta - np.logaddexp(0.0, eta).sum() - 0.5 * (pen * b * b).sum())

    cur = pll(beta)
    for _ in range(_LOGIT_MAX_ITER):
        prob = _expit(A @ beta)
        w = prob * (1.0 - prob) + 1e-12
        H = (A.T * w) @ A + np.diag(pen)
        g = A.T @ (z - prob) - pen * beta
        step = np.linalg.solve(H, g)
        t = 1.0
        for _ in range(30):
            cand = beta + t * step
            new = pll(cand)
            if new >= cur - 1e-12:
                break
            t *= 0.5
        beta = beta + t * step
        new = pll(beta)
        if abs(new - cur) <= _LOGIT_TOL * (1.0 + abs(cur)):
            cur = new
            break
        cur = new
    return beta


# ---------------------------------------------------------------------------
# Per-kind fitters: hyperparameters, X, y, seed, notes -> params dict
# ---------------------------------------------------------------------------


def _fit_mean(hp, X, y, seed, notes):
    return {"mean": float(y.mean())}


def _fit_ols(hp, X, y, seed, notes):
    n, p = X.shape
    A = np.column_stack([np.ones(n), X])
    coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    if rank < p + 1:
        intercept, slopes = _ridge_solve(X, y, _OLS_FALLBACK_PENALTY)
        notes.append(f"singular design (rank {rank} < {p + 1}); ridge fallback "
                     f"penalty={_OLS_FALLBACK_PENALTY}")
        coef = np.concatenate([[intercept], slopes])
    return {"intercept": float(coef[0]), "coef": coef[1:]}


def _fit_ridge(hp, X, y, seed, notes):
    penalty = float(hp.get("penalty", 1.0))
    intercept, coef = _ridge_solve(X, y, penalty)
    return {"intercept": intercept, "coef": coef, "penalty": penalty}


def _lasso_grid(Xc: np.ndarray, yc: np.ndarray, n: int) -> np.ndarray:
    lam_max = float(np.max(np.abs(Xc.T @ yc))) / n
    if lam_max <= 0.0:
        return np.array([1.0])  # y is constant; any penalty gives beta = 0
    return np.geomspace(lam_max, lam_max * _LASSO_CV_RATIO, _LASSO_CV_GRID)


def _fit_lasso(hp, X, y, seed, notes):
    n, p = X.shape
    mu = X.mean(axis=0)
    ybar = float(y.mean())
    Xc = X - mu
    yc = y - ybar
    penalty = hp.get("penalty")
    if penalty is None:
        # Pick the penalty by internal 5-fold CV over a log-spaced path.
        grid = _lasso_grid(Xc, yc, n)
        if n < _LASSO_CV_FOLDS * 2:
            penalty = float(grid[0])
            notes.append(f"too few rows for internal CV; penalty={penalty:.6g}")
        else:
            plan = make_folds(n, _LASSO_CV_FOLDS, derive_seed(seed, "cv"))
            cv_sse = np.zeros(grid.size)
            for v in range(_LASSO_CV_FOLDS):
                tr = plan.train_indices(v)
                va = plan.fold_indices(v)
                Xt = X[tr] - X[tr].mean(axis=0)
                yt = y[tr] - y[tr].mean()
                path = cd_path(Xt.T @ Xt, Xt.T @ yt, tr.size, grid,
                               _LASSO_TOL, _LASSO_MAX_SWEEPS)
                pred = (X[va] - X[tr].mean(axis=0)) @ path.T + y[tr].mean()
                cv_sse += ((y[va][:, None] - pred) ** 2).sum(axis=0)
            penalty = float(grid[int(np.argmin(cv_sse))])
    else:
        penalty = float(penalty)
    path = cd_path(Xc.T @ Xc, Xc.T @ yc, n, np.array([penalty]),
                   _LASSO_TOL, _LASSO_MAX_SWEEPS)
    coef = path[0]
    return {"intercept": ybar - float(mu @ coef), "coef": coef, "penalty": penalty}


def _fit_knn(hp, X, y, seed, notes):
    n = X.shape[0]
    k = int(hp.get("k", 5))
    if k > n:
        notes.append(f"k={k} exceeds n={n}; clamped to n")
        k = n
    standardize = bool(hp.get("standardize", True))
    if standardize:
        mu = X.mean(axis=0)
        sigma = X.std(axis=0)
        sigma[sigma == 0.0] = 1.0
    else:
        mu = np.zeros(X.shape[1])
        sigma = np.ones(X.shape[1])
    return {"k": k, "mu": mu, "sigma": sigma, "train": (X - mu) / sigma, "y": y.copy()}


def _fit_tree(hp, X, y, seed, notes):
    max_depth = hp.get("max_depth")
    min_leaf = int(hp.get("min_leaf", 5))
    tree = trees.build_tree(X, y, max_depth=max_depth, min_leaf=min_leaf)
    return {"tree": tree}


def _fit_forest(hp, X, y, seed, notes):
    p = X.shape[1]
    n_trees = int(hp.get("n_trees", 200))
    mtry = hp.get("mtry")
    mtry = math.ceil(p / 3) if mtry is None else min(int(mtry), p)
    min_leaf = int(hp.get("min_leaf", 5))
    max_depth = hp.get("max_depth")
    bootstrap = bool(hp.get("bootstrap", True))
    members = trees.build_forest(X, y, seed, n_trees, max_depth, min_leaf, mtry, bootstrap)
    return {"trees": members, "mtry": mtry}


def _fit_logistic(hp, X, y, seed, notes):
    values = np.unique(y)
    if not np.all(np.isin(values, (0.0, 1.0))):
        raise ValueError("LogisticGLM requires a binary 0/1 outcome")
    return {"coef": _logistic_irls(X, y)}


def _fit_two_stage(hp, X, y, seed, notes):
    if np.any(y < 0):
        raise ValueError("TwoStage requires a nonnegative outcome")
    stage1_hp = hp.get("stage1") or {"kind": "LogisticGLM"}
    stage2_hp = hp.get("stage2") or {"kind": "OLS"}
    positive = y > 0
    if positive.all():
        notes.append("no zero outcomes; stage 2 alone")
        kind2, params2 = _fit_stage(stage2_hp, X, y, derive_seed(seed, "stage2"), notes)
        return {"mode": "stage2_only", "stage2_kind": kind2, "stage2": params2}
    if not positive.any():
        notes.append("no positive outcomes; constant zero predictor")
        return {"mode": "mean", "mean": 0.0}
    z = positive.astype(float)
    kind1, params1 = _fit_stage(stage1_hp, X, z, derive_seed(seed, "stage1"), notes)
    try:
        kind2, params2 = _fit_stage(stage2_hp, X[positive], y[positive],
                                    derive_seed(seed, "stage2"), notes)
    except Exception as exc:
        notes.append(f"stage 2 failed ({exc}); mean of positives")
        kind2, params2 = "Mean", {"mean": float(y[positive].mean())}
    return {
        "mode": "full",
        "stage1_kind": kind1,
        "stage1": params1,
        "stage2_kind": kind2,
        "stage2": params2,
    }


def _fit_stage(stage_hp: dict, X, y, seed, notes) -> tuple[str, dict]:
    kind = stage_hp["kind"]
    params = _FITTERS[kind](stage_hp.get("hyperparameters", {}), X, y, seed, notes)
    return kind, params


_FITTERS = {
    "Mean": _fit_mean,
    "OLS": _fit_ols,
    "Ridge": _fit_ridge,
    "Lasso": _fit_lasso,
    "KNN": _fit_knn,
    "RegressionTree": _fit_tree,
    "RandomForest": _fit_forest,
    "LogisticGLM": _fit_logistic,
    "TwoStage": _fit_two_stage,
}


# ---------------------------------------------------------------------------
# Per-kind predictors: params, X -> raw predictions (before clamping)
# ---------------------------------------------------------------------------


def _predict_linear(params, X):
    return params["intercept"] + X @ params["coef"]


def _predict_knn(params, X):
    Q = (X - params["mu"]) / params["sigma"]
    T = params["train"]
    yt = params["y"]
    k = params["k"]
    out = np.empty(Q.shape[0])
    sq_t = (T * T).sum(axis=1)
    block = max(1, int(2_000_000 // max(1, T.shape[0])))
    for start in range(0, Q.shape[0], block):
        q = Q[start : start + block]
        d2 = (q * q).sum(axis=1)[:, None] - 2.0 * (q @ T.T) + sq_t
        if k < T.shape[0]:
            nb = np.argpartition(d2, k - 1, axis=1)[:, :k]
            out[start : start + q.shape[0]] = yt[nb].mean(axis=1)
        else:
            out[start : start + q.shape[0]] = yt.mean()
    return out


def _predict_two_stage(params, X):
    mode = params["mode"]
    if mode == "mean":
        return np.full(X.shape[0], params["mean"])
    stage2 = _stage_predict(params["stage2_kind"], params["stage2"], X)
    if mode == "stage2_only":
        return stage2
    prob = _stage_predict(params["stage1_kind"], params["stage1"], X)
    return np.clip(prob, 0.0, 1.0) * stage2


def _stage_predict(kind, params, X):
    return _PREDICTORS[kind](params, X)


_PREDICTORS = {
    "Mean": lambda params, X: np.full(X.shape[0], params["mean"]),
    "OLS": _predict_linear,
    "Ridge": _predict_linear,
    "Lasso": _predict_linear,
    "KNN": _predict_knn,
    "RegressionTree": lambda params, X: trees.tree_predict(params["tree"], X),
    "RandomForest": lambda params, X: trees.forest_predict(params["trees"], X),
    "LogisticGLM": lambda params, X: _expit(params["coef"][0] + X @ params["coef"][1:]),
    "TwoStage": _predict_two_stage,
}


# ---------------------------------------------------------------------------
# Public entry points
# ---------------------------------------------------------------------------


def fit(spec: LearnerSpec, X: np.ndarray, y: np.ndarray, seed: int) -> FittedLearner:
    """Train one learner; predictions will be clamped to the training band.

    The clamp is [min(y) - range(y), max(y) + range(y)].
    """
    global _fit_calls
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise ValueError(f"X must be a nonempty 2-d array, got shape {X.shape}")
    if y.shape != (X.shape[0],):
        raise ValueError(f"y shape {y.shape} does not match {X.shape[0]} rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("X and y must be finite")
    validate_spec(spec)
    _fit_calls += 1
    lo = float(y.min())
    hi = float(y.max())
    span = hi - lo
    notes: list[str] = []
    params = _FITTERS[spec.kind](spec.hyperparameters, X, y, seed, notes)
    return FittedLearner(
        spec=spec,
        n_features=X.shape[1],
        clamp=(lo - span, hi + span),
        params=params,
        notes=notes,
    )


def predict(model: FittedLearner, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(
            f"X must be 2-d with {model.n_features} columns, got shape {X.shape}"
        )
    if not np.all(np.isfinite(X)):
        raise ValueError("X must be finite")
    raw = _PREDICTORS[model.spec.kind](model.params, X)
    return np.clip(raw, model.clamp[0], model.clamp[1])


def fit_with_fallback(
    spec: LearnerSpec,
    X: np.ndarray,
    y: np.ndarray,
    seed: int,
    log: list,
    context: str,
) -> FittedLearner:
    """``fit`` that degrades to the training mean instead of raising.

    Every fallback and every fitter note lands in ``log`` as a dict with
    the learner name and the split it happened on.
    """
    try:
        model = fit(spec, X, y, seed)
    except Exception as exc:
        log.append({"learner": spec.name, "split": context,
                    "event": "fallback_to_mean", "detail": str(exc)})
        model = fit(LearnerSpec(name=spec.name, kind="Mean"), X, y, seed)
        return model
    for note in model.notes:
        log.append({"learner": spec.name, "split": context, "event": "note", "detail": note})
    return model
