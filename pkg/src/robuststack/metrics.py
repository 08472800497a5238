"""Evaluation metrics for predictions and for lambda-selection stability."""

from __future__ import annotations

import numpy as np

__all__ = [
    "score",
    "outlier_fraction",
    "skewness",
    "icc",
    "selection_accuracy",
]


def _pair(predictions, outcomes) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(predictions, dtype=float)
    y = np.asarray(outcomes, dtype=float)
    if pred.ndim != 1 or pred.shape != y.shape:
        raise ValueError(f"shape mismatch: predictions {pred.shape}, outcomes {y.shape}")
    if pred.size == 0:
        raise ValueError("need at least one observation")
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(y))):
        raise ValueError("predictions and outcomes must be finite")
    return pred, y


def score(predictions: np.ndarray, outcomes: np.ndarray) -> dict:
    """MSE, MAE and R^2 of predictions against outcomes.

    R^2 = 1 - SSE / SST; it is None when the outcomes have zero variance,
    where the ratio is undefined.
    """
    pred, y = _pair(predictions, outcomes)
    resid = y - pred
    sse = float(resid @ resid)
    centered = y - y.mean()
    sst = float(centered @ centered)
    return {
        "mse": sse / y.size,
        "mae": float(np.mean(np.abs(resid))),
        "r2": None if sst == 0.0 else 1.0 - sse / sst,
    }


def outlier_fraction(y: np.ndarray) -> float:
    """Fraction of values strictly above Q3 + 1.5 * IQR.

    Quartiles use linear interpolation between order statistics (the
    common 'type 7' rule).
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size < 4:
        raise ValueError("outlier_fraction needs a 1-d sample of at least 4 values")
    if not np.all(np.isfinite(y)):
        raise ValueError("y must be finite")
    q1, q3 = np.quantile(y, [0.25, 0.75])
    cutoff = q3 + 1.5 * (q3 - q1)
    return float(np.mean(y > cutoff))


def skewness(y: np.ndarray) -> float:
    """Sample skewness m3 / m2^(3/2) with biased central moments."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size < 2:
        raise ValueError("skewness needs a 1-d sample of at least 2 values")
    if not np.all(np.isfinite(y)):
        raise ValueError("y must be finite")
    d = y - y.mean()
    m2 = float(np.mean(d * d))
    if m2 == 0.0:
        raise ValueError("skewness is undefined for a constant sample")
    m3 = float(np.mean(d * d * d))
    return m3 / m2**1.5


def icc(lambda_a: np.ndarray, lambda_b: np.ndarray) -> float:
    """Intraclass correlation of paired lambda choices, on log10 scale.

    One-way random-effects ICC(1,1) with each pair treated as a group of
    two ratings: (MSB - MSW) / (MSB + MSW).
    """
    a = np.asarray(lambda_a, dtype=float)
    b = np.asarray(lambda_b, dtype=float)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.size < 2:
        raise ValueError("icc needs at least 2 pairs")
    if np.any(a <= 0) or np.any(b <= 0) or not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("lambda values must be finite and positive")
    pairs = np.column_stack([np.log10(a), np.log10(b)])
    n = pairs.shape[0]
    grand = pairs.mean()
    group_means = pairs.mean(axis=1)
    ssb = 2.0 * float(((group_means - grand) ** 2).sum())
    ssw = float(((pairs - group_means[:, None]) ** 2).sum())
    if ssb + ssw == 0.0:
        raise ValueError("icc is undefined when all values are identical")
    msb = ssb / (n - 1)
    msw = ssw / n
    return (msb - msw) / (msb + msw)


def selection_accuracy(index_a: np.ndarray, index_b: np.ndarray) -> float:
    """Fraction of paired runs that selected the identical grid index."""
    a = np.asarray(index_a)
    b = np.asarray(index_b)
    if a.ndim != 1 or a.shape != b.shape or a.size == 0:
        raise ValueError("selection_accuracy needs two equal-length nonempty vectors")
    return float(np.mean(a == b))
