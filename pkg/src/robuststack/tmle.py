"""Targeted maximum likelihood estimation of the average treatment effect.

The targeting step fluctuates the initial outcome regression along the
clever covariate H(A, X) = A / g(X) - (1 - A) / (1 - g(X)).  With the
default linear fluctuation the coefficient has the closed form

    eps = sum_i H_i (y_i - Q(A_i, X_i)) / sum_i H_i^2

which zeroes the efficient-influence-curve score sum_i H_i (y_i - Q*_i)
exactly.  A logistic fluctuation on the outcome rescaled to [0, 1] is
available behind a flag for bounded outcomes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .learners import _expit, _logistic_irls
from .superlearner import SuperLearnerModel, predict_super_learner

__all__ = [
    "PropensityModel",
    "AteEstimate",
    "fit_propensity",
    "unadjusted_ate",
    "tmle_from_predictions",
    "tmle_ate",
]

_PROPENSITY_CLIP = (0.01, 0.99)


@dataclass
class PropensityModel:
    coef: np.ndarray  # [intercept, slopes] of a main-terms logistic model

    def probabilities(self, X: np.ndarray) -> np.ndarray:
        """P(A = 1 | X), clipped away from 0 and 1."""
        raw = _expit(self.coef[0] + np.asarray(X, dtype=float) @ self.coef[1:])
        return np.clip(raw, *_PROPENSITY_CLIP)


@dataclass
class AteEstimate:
    estimate: float
    label: str
    epsilon: float | None = None
    diagnostics: dict = field(default_factory=dict)


def _check_treatment(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if not np.all(np.isin(a, (0.0, 1.0))):
        raise ValueError("treatment must be coded 0/1")
    if a.min() == a.max():
        raise ValueError("both treatment arms must be nonempty")
    return a


def fit_propensity(X: np.ndarray, a: np.ndarray, seed: int = 0) -> PropensityModel:
    """Main-terms logistic regression of treatment on the covariates."""
    X = np.asarray(X, dtype=float)
    a = _check_treatment(a)
    return PropensityModel(coef=_logistic_irls(X, a))


def unadjusted_ate(y: np.ndarray, a: np.ndarray) -> AteEstimate:
    """Difference of arm means, no covariate adjustment."""
    y = np.asarray(y, dtype=float)
    a = _check_treatment(a)
    est = float(y[a == 1.0].mean() - y[a == 0.0].mean())
    return AteEstimate(estimate=est, label="unadjusted")


def tmle_from_predictions(
    y: np.ndarray,
    a: np.ndarray,
    q_obs: np.ndarray,
    q1: np.ndarray,
    q0: np.ndarray,
    g1: np.ndarray,
    fluctuation: str = "linear",
) -> AteEstimate:
    """Targeting step given initial outcome predictions and propensities.

    q_obs, q1, q0 are the predictions at the observed treatment, at
    treatment 1, and at treatment 0; g1 is P(A=1 | X), already clipped.
    """
    y = np.asarray(y, dtype=float)
    a = _check_treatment(a)
    g1 = np.asarray(g1, dtype=float)
    if np.any(g1 <= 0.0) or np.any(g1 >= 1.0):
        raise ValueError("propensities must lie strictly inside (0, 1)")
    h_obs = a / g1 - (1.0 - a) / (1.0 - g1)
    h1 = 1.0 / g1
    h0 = -1.0 / (1.0 - g1)
    if fluctuation == "linear":
        # fsum keeps the score identity exact to well below 1e-8 even at
        # cost-data magnitudes, where plain dot products lose digits.
        denom = math.fsum(h_obs * h_obs)
        eps = math.fsum(h_obs * (y - q_obs)) / denom
        q1_star = q1 + eps * h1
        q0_star = q0 + eps * h0
        score = math.fsum(h_obs * (y - q_obs - eps * h_obs))
    elif fluctuation == "logistic":
        lo = min(float(y.min()), float(np.min(q0)), float(np.min(q1)), float(np.min(q_obs)))
        hi = max(float(y.max()), float(np.max(q0)), float(np.max(q1)), float(np.max(q_obs)))
        span = hi - lo
        if span <= 0:
            raise ValueError("logistic fluctuation needs a nonconstant outcome")
        ys = (y - lo) / span
        bound = lambda q: np.clip((q - lo) / span, 1e-10, 1.0 - 1e-10)
        logit = lambda p: np.log(p / (1.0 - p))
        off_obs, off1, off0 = logit(bound(q_obs)), logit(bound(q1)), logit(bound(q0))
        eps = 0.0
        for _ in range(100):
            p = _expit(off_obs + eps * h_obs)
            grad = float(h_obs @ (ys - p))
            hess = -float((h_obs * h_obs) @ (p * (1.0 - p)))
            if hess == 0.0:
                break
            step = -grad / hess
            eps += step
            if abs(step) < 1e-12:
                break
        q1_star = lo + span * _expit(off1 + eps * h1)
        q0_star = lo + span * _expit(off0 + eps * h0)
        score = float(h_obs @ (ys - _expit(off_obs + eps * h_obs))) * span
    else:
        raise ValueError(f"fluctuation must be 'linear' or 'logistic', got {fluctuation!r}")
    est = float(np.mean(q1_star - q0_star))
    return AteEstimate(
        estimate=est,
        label=f"tmle-{fluctuation}",
        epsilon=eps,
        diagnostics={
            "score": score,
            "propensity_min": float(g1.min()),
            "propensity_max": float(g1.max()),
        },
    )


def tmle_ate(
    X: np.ndarray,
    a: np.ndarray,
    y: np.ndarray,
    outcome_model: SuperLearnerModel,
    propensity: PropensityModel,
    adjustment_columns: slice | np.ndarray = None,
    fluctuation: str = "linear",
) -> AteEstimate:
    """TMLE of the ATE with a super learner outcome regression.

    The outcome model must have been trained on [a, X] with the treatment
    as the first feature column.  ``adjustment_columns`` selects the
    covariates the propensity model was fit on (default: all of X).
    """
    X = np.asarray(X, dtype=float)
    a = _check_treatment(a)
    y = np.asarray(y, dtype=float)
    feats = np.column_stack([a, X])
    q_obs = predict_super_learner(outcome_model, feats)
    feats[:, 0] = 1.0
    q1 = predict_super_learner(outcome_model, feats)
    feats[:, 0] = 0.0
    q0 = predict_super_learner(outcome_model, feats)
    X_adj = X if adjustment_columns is None else X[:, adjustment_columns]
    g1 = propensity.probabilities(X_adj)
    return tmle_from_predictions(y, a, q_obs, q1, q0, g1, fluctuation=fluctuation)
