"""Level-one matrix construction for stacking.

Z[i, k] holds the prediction for row i from learner k trained on every
fold except fold(i), so each row of Z is an honest out-of-sample
prediction.  Learner trainings are seeded per (seed, learner, fold) and
are independent of each other, which makes the matrix reproducible no
matter how the (learner, fold) tasks would be scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._rng import derive_seed
from .folds import FoldPlan, make_folds
from .learners import FittedLearner, LearnerSpec, fit_with_fallback

__all__ = ["LevelOneMatrix", "build_level_one"]


@dataclass
class LevelOneMatrix:
    Z: np.ndarray  # (n, K) cross-validated predictions
    plan: FoldPlan
    learner_names: list[str]
    fold_models: list[list[FittedLearner]]  # [v][k]
    fit_log: list[dict] = field(default_factory=list)


def build_level_one(
    X: np.ndarray,
    y: np.ndarray,
    specs: list[LearnerSpec],
    n_folds: int,
    seed: int,
    plan: FoldPlan | None = None,
    stratify_zero: bool = False,
) -> LevelOneMatrix:
    """Cross-validated predictions for every learner in ``specs``.

    Pass ``plan`` to reuse an existing fold assignment; otherwise one is
    drawn from (n, n_folds, seed).  Training order is row-major in
    (fold, learner) but the result does not depend on it.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if not specs:
        raise ValueError("need at least one learner spec")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate learner names: {names}")
    if plan is None:
        plan = make_folds(n, n_folds, seed, stratify_zero=y if stratify_zero else None)
    elif plan.n != n:
        raise ValueError(f"fold plan covers {plan.n} rows, data has {n}")
    Z = np.empty((n, len(specs)))
    fit_log: list[dict] = []
    fold_models: list[list[FittedLearner]] = []
    for v in range(plan.n_folds):
        tr = plan.train_indices(v)
        va = plan.fold_indices(v)
        row = []
        for k, spec in enumerate(specs):
            model = fit_with_fallback(
                spec, X[tr], y[tr], derive_seed(seed, "learner", k, v),
                fit_log, context=f"fold{v}",
            )
            Z[va, k] = model.predict(X[va])
            row.append(model)
        fold_models.append(row)
    return LevelOneMatrix(Z=Z, plan=plan, learner_names=names,
                          fold_models=fold_models, fit_log=fit_log)
