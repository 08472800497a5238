"""Convex ensemble weight optimization over the probability simplex.

solve_weights minimizes the cross-validated ensemble risk

    F(alpha) = sum_i w_i * loss(y_i - Z[i] @ alpha)

over the simplex {alpha >= 0, sum alpha = 1} by projected gradient
descent with Armijo backtracking.  The objective is convex for both
supported losses, so the stationary point found is the global optimum.
discrete_select is the winner-take-all alternative: a one-hot weight
vector at the column with the smallest empirical risk.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .losses import Loss

__all__ = [
    "MetaSolveOptions",
    "SolveInfo",
    "project_to_simplex",
    "solve_weights",
    "solve_weights_info",
    "discrete_select",
    "grid_minimum",
    "simplex_lattice",
]

_ARMIJO_C = 1e-4
_ARMIJO_SHRINK = 0.5
_MAX_HALVINGS = 80


@dataclass(frozen=True)
class MetaSolveOptions:
    max_iterations: int = 5000
    tolerance: float = 1e-9  # relative objective decrease
    initial_step: float = 1.0
    grid_snap_step: float | None = None  # testing mode: minimize on a lattice


@dataclass
class SolveInfo:
    objective: float
    iterations: int
    converged: bool
    trace: list[float] = field(default_factory=list)


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of ``v`` onto the probability simplex.

    Sort-based algorithm: find the largest support size rho such that the
    shifted entries stay positive, then clip.  O(K log K).
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("project_to_simplex expects a nonempty 1-d vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("project_to_simplex input must be finite")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    cond = u - css / ind > 0
    rho = ind[cond][-1]
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def _prepare(level_one: np.ndarray, outcomes: np.ndarray, sample_weight):
    Z = np.asarray(level_one, dtype=float)
    y = np.asarray(outcomes, dtype=float)
    if Z.ndim != 2:
        raise ValueError(f"level-one matrix must be 2-d, got shape {Z.shape}")
    n, k = Z.shape
    if n == 0 or k == 0:
        raise ValueError("level-one matrix must be nonempty")
    if y.shape != (n,):
        raise ValueError(f"outcomes shape {y.shape} does not match {n} rows")
    if not (np.all(np.isfinite(Z)) and np.all(np.isfinite(y))):
        raise ValueError("level-one matrix and outcomes must be finite")
    if sample_weight is None:
        w = np.full(n, 1.0 / n)
    else:
        w = np.asarray(sample_weight, dtype=float)
        if w.shape != (n,) or not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("sample_weight must be nonnegative, finite, length n")
        total = w.sum()
        if total <= 0:
            raise ValueError("sample_weight must have positive total mass")
        w = w / total
    return Z, y, w


def _objective(alpha, Z, y, w, loss):
    return float(w @ loss.loss(y - Z @ alpha))


def _gradient(alpha, Z, y, w, loss):
    return -(Z.T @ (w * loss.psi(y - Z @ alpha)))


def solve_weights_info(
    level_one: np.ndarray,
    outcomes: np.ndarray,
    loss: Loss,
    options: MetaSolveOptions | None = None,
    sample_weight: np.ndarray | None = None,
    keep_trace: bool = False,
) -> tuple[np.ndarray, SolveInfo]:
    """solve_weights plus convergence diagnostics."""
    opts = options or MetaSolveOptions()
    Z, y, w = _prepare(level_one, outcomes, sample_weight)
    n, k = Z.shape

    if opts.grid_snap_step is not None:
        alpha, fval = grid_minimum(Z, y, loss, opts.grid_snap_step, sample_weight=w)
        return alpha, SolveInfo(objective=fval, iterations=0, converged=True)

    if k == 1:
        alpha = np.array([1.0])
        return alpha, SolveInfo(
            objective=_objective(alpha, Z, y, w, loss), iterations=0, converged=True
        )

    alpha = np.full(k, 1.0 / k)
    fval = _objective(alpha, Z, y, w, loss)
    trace = [fval] if keep_trace else []
    step = opts.initial_step
    converged = False
    it = 0
    for it in range(1, opts.max_iterations + 1):
        grad = _gradient(alpha, Z, y, w, loss)
        t = step
        accepted = False
        for _ in range(_MAX_HALVINGS):
            cand = project_to_simplex(alpha - t * grad)
            delta = cand - alpha
            if not np.any(delta):
                break
            fcand = _objective(cand, Z, y, w, loss)
            if fcand <= fval + _ARMIJO_C * float(grad @ delta):
                accepted = True
                break
            t *= _ARMIJO_SHRINK
        if not accepted:
            # No descent direction at line-search resolution: stationary.
            converged = True
            break
        decrease = fval - fcand
        alpha, fval = cand, fcand
        if keep_trace:
            trace.append(fval)
        step = min(t * 2.0, 1e12)
        if decrease <= opts.tolerance * max(1.0, abs(fval)):
            converged = True
            break
    return alpha, SolveInfo(objective=fval, iterations=it, converged=converged, trace=trace)


def solve_weights(
    level_one: np.ndarray,
    outcomes: np.ndarray,
    loss: Loss,
    options: MetaSolveOptions | None = None,
    sample_weight: np.ndarray | None = None,
) -> np.ndarray:
    """Convex ensemble weights minimizing the weighted empirical risk."""
    alpha, _ = solve_weights_info(level_one, outcomes, loss, options, sample_weight)
    return alpha


def discrete_select(
    level_one: np.ndarray,
    outcomes: np.ndarray,
    loss: Loss,
    sample_weight: np.ndarray | None = None,
) -> np.ndarray:
    """One-hot weights at the column with the lowest empirical risk.

    Ties go to the lowest column index.
    """
    Z, y, w = _prepare(level_one, outcomes, sample_weight)
    risks = np.array([float(w @ loss.loss(y - Z[:, j])) for j in range(Z.shape[1])])
    best = int(np.argmin(risks))  # argmin takes the first minimum
    alpha = np.zeros(Z.shape[1])
    alpha[best] = 1.0
    return alpha


def simplex_lattice(k: int, step: float) -> np.ndarray:
    """All simplex points with coordinates that are multiples of ``step``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    m = int(round(1.0 / step))
    if m < 1 or abs(m * step - 1.0) > 1e-9:
        raise ValueError(f"step {step} must evenly divide 1")
    n_points = 1
    for i in range(1, k):
        n_points = n_points * (m + i) // i
    if n_points > 5_000_000:
        raise ValueError(f"lattice too large ({n_points} points)")
    # Compositions of m into k parts via stars and bars over cut positions.
    out = np.empty((n_points, k), dtype=float)
    row = 0
    for cuts in combinations(range(m + k - 1), k - 1):
        prev = -1
        parts = []
        for c in cuts:
            parts.append(c - prev - 1)
            prev = c
        parts.append(m + k - 2 - prev)
        out[row] = parts
        row += 1
    return out / m


def grid_minimum(
    level_one: np.ndarray,
    outcomes: np.ndarray,
    loss: Loss,
    step: float,
    sample_weight: np.ndarray | None = None,
) -> tuple[np.ndarray, float]:
    """Exhaustive minimum of the ensemble risk over a simplex lattice.

    Independent of the gradient solver on purpose: the objective is
    evaluated directly, column block by column block, so this doubles as
    a brute-force check of ``solve_weights``.
    """
    Z, y, w = _prepare(level_one, outcomes, sample_weight)
    lattice = simplex_lattice(Z.shape[1], step)
    best_val = np.inf
    best_alpha = None
    block = max(1, int(4_000_000 // max(1, Z.shape[0])))
    for start in range(0, lattice.shape[0], block):
        A = lattice[start : start + block]
        resid = y[:, None] - Z @ A.T
        vals = w @ loss.loss(resid)
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val = float(vals[j])
            best_alpha = A[j].copy()
    return best_alpha, best_val
