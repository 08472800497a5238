"""Regression trees and bagged forests, built from scratch on numpy.

The tree is standard CART for regression: greedy SSE-minimizing axis
splits, midpoint thresholds, deterministic tie-breaking by (feature
index, threshold).  The forest draws one bootstrap sample per tree and a
fresh feature subset per node.  Every tree is seeded independently from
(seed, tree index), so results do not depend on the order in which trees
are trained.
"""

from __future__ import annotations

import numpy as np

from ._rng import rng_for

__all__ = ["build_tree", "tree_predict", "build_forest", "forest_predict"]

_LEAF = -1


def build_tree(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: int | None = None,
    min_leaf: int = 1,
    mtry: int | None = None,
    rng: np.random.Generator | None = None,
) -> dict:
    """Fit a regression tree; returns flat node arrays.

    ``mtry`` restricts the split search at each node to a random subset
    of features (used by the forest); it requires ``rng``.
    """
    n, p = X.shape
    if mtry is not None and rng is None:
        raise ValueError("mtry requires an rng")
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def new_node() -> int:
        feature.append(_LEAF)
        threshold.append(0.0)
        left.append(_LEAF)
        right.append(_LEAF)
        value.append(0.0)
        return len(feature) - 1

    # Explicit stack keeps deep trees from hitting the recursion limit.
    root = new_node()
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        yn = y[idx]
        value[node] = float(yn.mean())
        m = idx.size
        if m < 2 * min_leaf or (max_depth is not None and depth >= max_depth):
            continue
        node_sse = float(yn @ yn - m * value[node] ** 2)
        if node_sse <= 1e-12 * max(1.0, float(yn @ yn)):
            continue
        if mtry is not None and mtry < p:
            feats = np.sort(rng.choice(p, size=mtry, replace=False))
        else:
            feats = np.arange(p)
        best_sse = np.inf
        best_feat = _LEAF
        best_thr = 0.0
        for f in feats:
            v = X[idx, f]
            order = np.argsort(v, kind="stable")
            sv = v[order]
            sy = yn[order]
            c1 = np.cumsum(sy)
            c2 = np.cumsum(sy * sy)
            n_left = np.arange(1, m)
            ok = (sv[:-1] < sv[1:]) & (n_left >= min_leaf) & (m - n_left >= min_leaf)
            if not ok.any():
                continue
            sse_l = c2[:-1] - c1[:-1] ** 2 / n_left
            sse_r = (c2[-1] - c2[:-1]) - (c1[-1] - c1[:-1]) ** 2 / (m - n_left)
            total = np.where(ok, sse_l + sse_r, np.inf)
            pos = int(np.argmin(total))
            if total[pos] < best_sse:
                best_sse = float(total[pos])
                best_feat = int(f)
                best_thr = float(0.5 * (sv[pos] + sv[pos + 1]))
        if best_feat == _LEAF or best_sse >= node_sse * (1.0 - 1e-12):
            continue
        v = X[idx, best_feat]
        go_left = v <= best_thr
        feature[node] = best_feat
        threshold[node] = best_thr
        lnode = new_node()
        rnode = new_node()
        left[node] = lnode
        right[node] = rnode
        stack.append((rnode, idx[~go_left], depth + 1))
        stack.append((lnode, idx[go_left], depth + 1))

    return {
        "feature": np.array(feature, dtype=np.int64),
        "threshold": np.array(threshold, dtype=float),
        "left": np.array(left, dtype=np.int64),
        "right": np.array(right, dtype=np.int64),
        "value": np.array(value, dtype=float),
    }


def tree_predict(tree: dict, X: np.ndarray) -> np.ndarray:
    """Vectorized descent: all rows advance one level per pass."""
    feature = tree["feature"]
    node = np.zeros(X.shape[0], dtype=np.int64)
    active = feature[node] != _LEAF
    while active.any():
        rows = np.nonzero(active)[0]
        nd = node[rows]
        go_left = X[rows, feature[nd]] <= tree["threshold"][nd]
        node[rows] = np.where(go_left, tree["left"][nd], tree["right"][nd])
        active[rows] = feature[node[rows]] != _LEAF
    return tree["value"][node]


def build_forest_tree(
    X: np.ndarray,
    y: np.ndarray,
    seed: int,
    tree_index: int,
    max_depth: int | None,
    min_leaf: int,
    mtry: int,
    bootstrap: bool,
) -> dict:
    """One forest member, fully determined by (seed, tree_index, data)."""
    rng = rng_for(seed, "tree", tree_index)
    if bootstrap:
        idx = rng.integers(0, X.shape[0], size=X.shape[0])
        Xb, yb = X[idx], y[idx]
    else:
        Xb, yb = X, y
    return build_tree(Xb, yb, max_depth=max_depth, min_leaf=min_leaf, mtry=mtry, rng=rng)


def build_forest(
    X: np.ndarray,
    y: np.ndarray,
    seed: int,
    n_trees: int,
    max_depth: int | None,
    min_leaf: int,
    mtry: int,
    bootstrap: bool,
) -> list[dict]:
    return [
        build_forest_tree(X, y, seed, t, max_depth, min_leaf, mtry, bootstrap)
        for t in range(n_trees)
    ]


def forest_predict(trees: list[dict], X: np.ndarray) -> np.ndarray:
    out = np.zeros(X.shape[0])
    for tree in trees:
        out += tree_predict(tree, X)
    return out / len(trees)
