"""Coordinate-descent lasso path on the Gram matrix.

Solves min_beta (1/(2n)) * ||y_c - X_c beta||^2 + penalty * ||beta||_1
for a descending sequence of penalties with warm starts.  Centering is
handled by the caller; work here is on G = X_c' X_c and c = X_c' y_c, so
one sweep costs O(p^2) regardless of n.  The kernel is numba-compiled
when available (it is a tight scalar loop), with an equivalent pure
Python fallback.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        if args and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True)
def _cd_path_kernel(G, c, n, penalties, tol, max_sweeps):  # pragma: no cover - jitted
    p = G.shape[0]
    path = np.zeros((penalties.shape[0], p))
    beta = np.zeros(p)
    gb = np.zeros(p)  # running G @ beta
    for jp in range(penalties.shape[0]):
        lam_n = penalties[jp] * n
        for _ in range(max_sweeps):
            max_delta = 0.0
            for j in range(p):
                gjj = G[j, j]
                if gjj <= 0.0:
                    continue
                rho = c[j] - gb[j] + gjj * beta[j]
                if rho > lam_n:
                    new = (rho - lam_n) / gjj
                elif rho < -lam_n:
                    new = (rho + lam_n) / gjj
                else:
                    new = 0.0
                d = new - beta[j]
                if d != 0.0:
                    for l in range(p):
                        gb[l] += G[l, j] * d
                    beta[j] = new
                    if abs(d) > max_delta:
                        max_delta = abs(d)
            if max_delta <= tol:
                break
        path[jp] = beta
    return path


def _cd_path_python(G, c, n, penalties, tol, max_sweeps):
    p = G.shape[0]
    path = np.zeros((penalties.shape[0], p))
    beta = np.zeros(p)
    gb = np.zeros(p)
    for jp in range(penalties.shape[0]):
        lam_n = penalties[jp] * n
        for _ in range(max_sweeps):
            max_delta = 0.0
            for j in range(p):
                gjj = G[j, j]
                if gjj <= 0.0:
                    continue
                rho = c[j] - gb[j] + gjj * beta[j]
                if rho > lam_n:
                    new = (rho - lam_n) / gjj
                elif rho < -lam_n:
                    new = (rho + lam_n) / gjj
                else:
                    new = 0.0
                d = new - beta[j]
                if d != 0.0:
                    gb += G[:, j] * d
                    beta[j] = new
                    max_delta = max(max_delta, abs(d))
            if max_delta <= tol:
                break
        path[jp] = beta
    return path


def cd_path(
    G: np.ndarray,
    c: np.ndarray,
    n: int,
    penalties: np.ndarray,
    tol: float = 1e-7,
    max_sweeps: int = 10_000,
) -> np.ndarray:
    """Coefficient path, one row per penalty (penalties must descend)."""
    G = np.ascontiguousarray(G, dtype=float)
    c = np.ascontiguousarray(c, dtype=float)
    penalties = np.ascontiguousarray(penalties, dtype=float)
    if _HAVE_NUMBA:
        return _cd_path_kernel(G, c, float(n), penalties, tol, max_sweeps)
    return _cd_path_python(G, c, float(n), penalties, tol, max_sweeps)
