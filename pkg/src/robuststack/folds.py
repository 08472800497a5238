"""Cross-validation fold assignment.

Folds are built by drawing a uniform random permutation of the row
indices and dealing them round-robin, so fold sizes never differ by more
than one and the assignment is a pure function of (n, V, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import rng_for

__all__ = ["FoldPlan", "make_folds", "fold_mean_weights"]


@dataclass(frozen=True)
class FoldPlan:
    n: int
    n_folds: int
    assignment: np.ndarray  # assignment[i] = fold of row i, in 0..n_folds-1

    def fold_indices(self, v: int) -> np.ndarray:
        return np.nonzero(self.assignment == v)[0]

    def train_indices(self, v: int) -> np.ndarray:
        return np.nonzero(self.assignment != v)[0]

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.n_folds)


def make_folds(n: int, n_folds: int, seed: int, stratify_zero: np.ndarray | None = None) -> FoldPlan:
    """Random round-robin fold plan for ``n`` rows.

    With ``stratify_zero`` (an outcome vector), zero and nonzero rows are
    dealt separately so each fold gets a proportional share of zeros.
    Off by default.
    """
    if not (2 <= n_folds <= n):
        raise ValueError(f"need 2 <= n_folds <= n, got n_folds={n_folds}, n={n}")
    rng = rng_for(seed, "folds")
    assignment = np.empty(n, dtype=np.int64)
    if stratify_zero is None:
        perm = rng.permutation(n)
        assignment[perm] = np.arange(n) % n_folds
    else:
        y = np.asarray(stratify_zero, dtype=float)
        if y.shape != (n,):
            raise ValueError("stratify_zero must have length n")
        offset = 0
        for group in (np.nonzero(y == 0)[0], np.nonzero(y != 0)[0]):
            perm = group[rng.permutation(group.size)]
            assignment[perm] = (offset + np.arange(group.size)) % n_folds
            offset += group.size
    return FoldPlan(n=n, n_folds=n_folds, assignment=assignment)


def fold_mean_weights(plan: FoldPlan) -> np.ndarray:
    """Per-row weights making a weighted sum equal the sum of per-fold means.

    Row i gets 1 / |fold(i)|.  Used so the ensemble risk matches the
    sum-over-folds-of-fold-means convention even when V does not divide n.
    """
    sizes = plan.sizes()
    if np.any(sizes == 0):
        raise ValueError("fold plan has an empty fold")
    return 1.0 / sizes[plan.assignment]
