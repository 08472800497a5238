"""Loss functions used by the ensemble weight optimizer.

Two losses are supported: the plain squared error r**2 and the Huber loss,
quadratic (r**2 / 2) inside the band |r| <= lam and linear outside.  The
Huber influence function psi is the clipped residual, which is what caps
the pull any single observation exerts on the fitted weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Squared", "Huber", "Loss", "huber_loss", "huber_psi", "empirical_risk"]


def _check_finite(x: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{what} must be finite")


def _as_residuals(residual) -> tuple[np.ndarray, bool]:
    r = np.asarray(residual, dtype=float)
    _check_finite(r, "residual")
    return r, np.ndim(residual) == 0


def huber_loss(residual, lam: float):
    """Huber loss: r**2 / 2 if |r| <= lam, else lam * (|r| - lam / 2).

    Accepts a scalar or an array of residuals; lam must be a finite
    positive number.  Continuous and once differentiable in r.
    """
    if not (np.isfinite(lam) and lam > 0):
        raise ValueError(f"lam must be finite and positive, got {lam}")
    r, scalar = _as_residuals(residual)
    a = np.abs(r)
    out = np.where(a <= lam, 0.5 * r * r, lam * (a - 0.5 * lam))
    return float(out) if scalar else out


def huber_psi(residual, lam: float):
    """Derivative of ``huber_loss`` in r: the residual clipped to [-lam, lam]."""
    if not (np.isfinite(lam) and lam > 0):
        raise ValueError(f"lam must be finite and positive, got {lam}")
    r, scalar = _as_residuals(residual)
    out = np.clip(r, -lam, lam)
    return float(out) if scalar else out


@dataclass(frozen=True)
class Squared:
    """Squared error loss r**2, the standard stacking objective."""

    def loss(self, residual: np.ndarray) -> np.ndarray:
        r = np.asarray(residual, dtype=float)
        return r * r

    def psi(self, residual: np.ndarray) -> np.ndarray:
        return 2.0 * np.asarray(residual, dtype=float)


@dataclass(frozen=True)
class Huber:
    """Huber loss with robustification parameter ``lam`` (> 0)."""

    lam: float

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"lam must be finite and positive, got {self.lam}")

    def loss(self, residual: np.ndarray) -> np.ndarray:
        r = np.asarray(residual, dtype=float)
        a = np.abs(r)
        return np.where(a <= self.lam, 0.5 * r * r, self.lam * (a - 0.5 * self.lam))

    def psi(self, residual: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(residual, dtype=float), -self.lam, self.lam)


Loss = Squared | Huber


def empirical_risk(predictions: np.ndarray, outcomes: np.ndarray, loss: Loss) -> float:
    """Sample mean of ``loss`` over the residuals outcomes - predictions."""
    pred = np.asarray(predictions, dtype=float)
    y = np.asarray(outcomes, dtype=float)
    if pred.shape != y.shape or pred.ndim != 1:
        raise ValueError(f"shape mismatch: predictions {pred.shape}, outcomes {y.shape}")
    if pred.size == 0:
        raise ValueError("empirical_risk needs at least one observation")
    _check_finite(pred, "predictions")
    _check_finite(y, "outcomes")
    return float(np.mean(loss.loss(y - pred)))
