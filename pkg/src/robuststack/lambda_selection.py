"""Choosing the Huber robustification parameter by cross-validation.

Two selectors are provided.  The partial selector is cheap: it solves the
ensemble weights once per grid value on the existing level-one matrix and
scores each candidate by the squared error of its cross-validated
ensemble predictions, reusing the winning weights as-is.  The nested
selector pays for an inner cross-validation layer inside every outer
training sample, scores candidates on genuinely held-out outer folds, and
then re-solves the weights on the full level-one matrix at the winning
value.  Both selectors break ties toward the smallest grid value.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ._rng import derive_seed
from .cross_validation import LevelOneMatrix, build_level_one
from .folds import fold_mean_weights
from .losses import Huber, Loss, Squared
from .meta import MetaSolveOptions, discrete_select, solve_weights

__all__ = [
    "LambdaGrid",
    "LambdaSelection",
    "NestedCvResult",
    "default_lambda_grid",
    "partial_cv_select",
    "nested_cv_select",
]


@dataclass(frozen=True)
class LambdaGrid:
    values: np.ndarray

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float))
        if v.size == 0:
            raise ValueError("lambda grid must be nonempty")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("lambda grid values must be finite and positive")
        if np.any(np.diff(v) == 0):
            raise ValueError("lambda grid values must be distinct")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size


@dataclass
class LambdaSelection:
    grid: LambdaGrid
    criterion: np.ndarray  # per-lambda held-out squared error
    chosen_index: int
    weights_per_lambda: np.ndarray | None = None  # (J, K), partial mode only

    @property
    def chosen_lambda(self) -> float:
        return float(self.grid.values[self.chosen_index])

    @property
    def weights(self) -> np.ndarray:
        if self.weights_per_lambda is None:
            raise ValueError("per-lambda weights were not retained")
        return self.weights_per_lambda[self.chosen_index]


@dataclass
class NestedCvResult:
    selection: LambdaSelection
    weights: np.ndarray
    outer: LevelOneMatrix


def default_lambda_grid(y: np.ndarray, n_points: int, spacing: str = "log") -> LambdaGrid:
    """Grid from 0.1 up to max(|y|), log-spaced unless asked otherwise."""
    y = np.asarray(y, dtype=float)
    if y.size == 0 or not np.all(np.isfinite(y)):
        raise ValueError("y must be nonempty and finite")
    if n_points < 1:
        raise ValueError(f"n_points must be >= 1, got {n_points}")
    if spacing not in ("log", "linear"):
        raise ValueError(f"spacing must be 'log' or 'linear', got {spacing!r}")
    top = float(np.max(np.abs(y)))
    if top <= 0.1:
        warnings.warn(
            f"max |y| = {top:.6g} <= 0.1; lambda grid collapses to the single value 0.1",
            stacklevel=2,
        )
        return LambdaGrid(np.array([0.1]))
    if spacing == "log":
        vals = np.geomspace(0.1, top, n_points)
    else:
        vals = np.linspace(0.1, top, n_points)
    return LambdaGrid(vals)


def _solve_for(mode: str, Z, y, loss: Loss, weights, options) -> np.ndarray:
    if mode == "convex":
        return solve_weights(Z, y, loss, options, sample_weight=weights)
    if mode == "discrete":
        return discrete_select(Z, y, loss, sample_weight=weights)
    raise ValueError(f"mode must be 'convex' or 'discrete', got {mode!r}")


def partial_cv_select(
    level_one: LevelOneMatrix,
    y: np.ndarray,
    grid: LambdaGrid,
    mode: str = "convex",
    options: MetaSolveOptions | None = None,
) -> LambdaSelection:
    """Pick lambda by squared error of the level-one ensemble predictions.

    For each grid value, ensemble weights are solved under Huber loss on
    the full level-one matrix; the winner minimizes the plain squared
    error of those cross-validated predictions.  The winner's weights are
    reused directly, with no refit.
    """
    y = np.asarray(y, dtype=float)
    Z = level_one.Z
    w = fold_mean_weights(level_one.plan)
    J = len(grid)
    W = np.empty((J, Z.shape[1]))
    crit = np.empty(J)
    for j, lam in enumerate(grid.values):
        W[j] = _solve_for(mode, Z, y, Huber(lam), w, options)
        resid = y - Z @ W[j]
        crit[j] = float(resid @ resid)
    chosen = int(np.argmin(crit))
    return LambdaSelection(grid=grid, criterion=crit, chosen_index=chosen,
                           weights_per_lambda=W)


def _nested_criteria(
    X: np.ndarray,
    y: np.ndarray,
    specs: list,
    grid: LambdaGrid,
    inner_folds: int,
    seed: int,
    modes: tuple[str, ...],
    options: MetaSolveOptions | None,
    outer: LevelOneMatrix,
) -> dict[str, np.ndarray]:
    """Outer-validation SSE per (mode, lambda); inner base fits are shared."""
    crit = {m: np.zeros(len(grid)) for m in modes}
    for v in range(outer.plan.n_folds):
        tr = outer.plan.train_indices(v)
        va = outer.plan.fold_indices(v)
        inner = build_level_one(X[tr], y[tr], specs, inner_folds,
                                derive_seed(seed, "inner", v))
        w_inner = fold_mean_weights(inner.plan)
        Zv = outer.Z[va]
        yv = y[va]
        for j, lam in enumerate(grid.values):
            for m in modes:
                alpha = _solve_for(m, inner.Z, y[tr], Huber(lam), w_inner, options)
                resid = yv - Zv @ alpha
                crit[m][j] += float(resid @ resid)
    return crit


def nested_cv_select(
    X: np.ndarray,
    y: np.ndarray,
    specs: list,
    grid: LambdaGrid,
    n_folds: int,
    inner_folds: int,
    seed: int,
    mode: str = "convex",
    options: MetaSolveOptions | None = None,
    outer: LevelOneMatrix | None = None,
) -> NestedCvResult:
    """Pick lambda by an inner cross-validation inside each outer fold.

    Candidate weights for every (lambda, outer fold) pair come from an
    inner level-one matrix built on that outer training sample alone, and
    are scored against the held-out outer fold, so the selection never
    sees its own training data.  Base fits are shared across the whole
    grid: the inner matrices are built once, and with J grid values the
    procedure costs V * (D + 1) * K learner trainings on top of the K
    full-data fits the caller makes.  The final weights are re-solved on
    the full level-one matrix at the winning lambda.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if outer is None:
        outer = build_level_one(X, y, specs, n_folds, seed)
    w_outer = fold_mean_weights(outer.plan)
    J = len(grid)
    if J == 1:
        final = _solve_for(mode, outer.Z, y, Huber(float(grid.values[0])), w_outer, options)
        sel = LambdaSelection(grid=grid, criterion=np.zeros(1), chosen_index=0)
        return NestedCvResult(selection=sel, weights=final, outer=outer)
    crit = _nested_criteria(X, y, specs, grid, inner_folds, seed, (mode,), options, outer)[mode]
    chosen = int(np.argmin(crit))
    lam_hat = float(grid.values[chosen])
    final = _solve_for(mode, outer.Z, y, Huber(lam_hat), w_outer, options)
    sel = LambdaSelection(grid=grid, criterion=crit, chosen_index=chosen)
    return NestedCvResult(selection=sel, weights=final, outer=outer)
