"""Random forest of CART regression trees.

Each tree sees a bootstrap sample of the training rows. At every node a fresh
random subset of ceil(feature_fraction * N) features is searched for the
squared-error-optimal threshold (midpoints between sorted distinct values);
a node is split only while it holds at least min_node_fraction of the
training rows. Leaves predict the mean target of their rows.
"""
from __future__ import annotations

import math
import warnings

import numba
import numpy as np

from .base import TrainedModel, standardization
from .config import ModelConfig, RFParams


@numba.njit(cache=True)
def _best_split(X, y, S, lo, hi, features, total):
    """Best threshold over the chosen features; S[f, lo:hi] holds the node's
    sample rows sorted by feature f."""
    n = hi - lo
    base = total * total / n
    best_gain = 0.0
    best_f = -1
    best_thr = 0.0
    for f in features:
        left = 0.0
        for i in range(lo, hi - 1):
            left += y[S[f, i]]
            a = X[S[f, i], f]
            b = X[S[f, i + 1], f]
            if a < b:
                nl = i + 1 - lo
                nr = n - nl
                right = total - left
                gain = left * left / nl + right * right / nr - base
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    thr = 0.5 * (a + b)
                    if not thr < b:
                        thr = a
                    best_thr = thr
    return best_f, best_thr, best_gain


@numba.njit(cache=True)
def _grow_tree(X, y, presorted, n_sub, min_split, seed, importance):
    """Grow one tree on a bootstrap sample.

    ``presorted[f]`` orders all training rows by feature f, so each node keeps
    per-feature sorted segments S[f, lo:hi] and no sorting happens per node.
    """
    np.random.seed(seed)
    n, n_feat = X.shape
    counts = np.zeros(n, dtype=np.int64)
    for i in range(n):
        counts[np.random.randint(n)] += 1
    S = np.empty((n_feat, n), dtype=np.int64)
    for f in range(n_feat):
        w = 0
        for j in range(n):
            r = presorted[f, j]
            for _ in range(counts[r]):
                S[f, w] = r
                w += 1
    cap = 2 * n + 1
    feat = np.full(cap, -1, dtype=np.int32)
    thr = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int32)
    right = np.full(cap, -1, dtype=np.int32)
    value = np.zeros(cap)
    goes_left = np.zeros(n, dtype=np.bool_)
    buf = np.empty(n, dtype=np.int64)
    pool = np.arange(n_feat)
    chosen = np.empty(n_sub, dtype=np.int64)

    stack = np.empty((cap, 3), dtype=np.int64)  # node, lo, hi
    stack[0, 0], stack[0, 1], stack[0, 2] = 0, 0, n
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node, lo, hi = stack[top, 0], stack[top, 1], stack[top, 2]
        m = hi - lo
        s = 0.0
        for i in range(lo, hi):
            s += y[S[0, i]]
        value[node] = s / m
        if m < min_split or m < 2:
            continue
        # partial Fisher-Yates draw of n_sub distinct features
        for j in range(n_sub):
            k = j + np.random.randint(n_feat - j)
            tmp = pool[j]
            pool[j] = pool[k]
            pool[k] = tmp
        chosen[:] = np.sort(pool[:n_sub])
        f, t, gain = _best_split(X, y, S, lo, hi, chosen, s)
        if f < 0 or gain <= 1e-12 * (abs(s) + 1.0):
            continue
        for i in range(lo, hi):
            r = S[f, i]
            goes_left[r] = X[r, f] <= t
        mid = lo
        for i in range(lo, hi):
            if goes_left[S[0, i]]:
                mid += 1
        # stable partition of every feature's segment
        for g in range(n_feat):
            a = lo
            b = mid
            for i in range(lo, hi):
                r = S[g, i]
                if goes_left[r]:
                    S[g, a] = r
                    a += 1
                else:
                    buf[b] = r
                    b += 1
            for i in range(mid, hi):
                S[g, i] = buf[i]
        feat[node] = f
        thr[node] = t
        importance[f] += gain
        left[node] = n_nodes
        right[node] = n_nodes + 1
        # push right first so the left subtree is numbered depth-first
        stack[top, 0], stack[top, 1], stack[top, 2] = n_nodes + 1, mid, hi
        stack[top + 1, 0], stack[top + 1, 1], stack[top + 1, 2] = n_nodes, lo, mid
        top += 2
        n_nodes += 2
    return feat[:n_nodes], thr[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@numba.njit(cache=True)
def _predict(Z, feat, thr, left, right, value, offsets):
    n = Z.shape[0]
    n_trees = offsets.size - 1
    out = np.zeros(n)
    for r in range(n):
        acc = 0.0
        for t in range(n_trees):
            base = offsets[t]
            node = 0
            while feat[base + node] >= 0:
                if Z[r, feat[base + node]] <= thr[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            acc += value[base + node]
        out[r] = acc / n_trees
    return out


def canonical_order(X, y) -> np.ndarray:
    """Row order independent of how the caller arranged the rows."""
    keys = np.column_stack([X, y]).T[::-1]
    return np.lexsort(keys)


def min_split_rows(params: RFParams, n: int) -> int:
    if params.min_node_fraction >= 1.0:
        return n + 1
    return max(2, math.ceil(params.min_node_fraction * n - 1e-9))


def rf_fit(X, y, config: ModelConfig | RFParams | None = None, seed: int = 0,
           feature_names=None) -> TrainedModel:
    if isinstance(config, RFParams):
        config = ModelConfig("random_forest", rf=config)
    config = (config or ModelConfig("random_forest")).validate()
    params = config.rf
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    if n < 1 or y.shape != (n,):
        raise ValueError("X must be (n, p) with n == len(y) >= 1")
    order = canonical_order(X, y)
    X, y = X[order], y[order]
    mean, scale = standardization(X)
    Z = np.ascontiguousarray((X - mean) / scale)
    presorted = np.ascontiguousarray(np.argsort(Z, axis=0, kind="stable").T)

    n_sub = min(p, max(1, math.ceil(params.feature_fraction * p - 1e-9)))
    min_split = min_split_rows(params, n)
    seeds = np.random.SeedSequence(seed).generate_state(params.n_trees, dtype=np.uint32)
    importance = np.zeros(p)
    parts = [_grow_tree(Z, y, presorted, n_sub, min_split, int(s), importance) for s in seeds]
    sizes = [len(t[0]) for t in parts]
    offsets = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
    forest = {
        "feature": np.concatenate([t[0] for t in parts]),
        "threshold": np.concatenate([t[1] for t in parts]),
        "left": np.concatenate([t[2] for t in parts]),
        "right": np.concatenate([t[3] for t in parts]),
        "value": np.concatenate([t[4] for t in parts]),
        "offsets": offsets,
        "importance_raw": importance,
    }
    names = list(feature_names) if feature_names is not None else [f"x{i}" for i in range(p)]
    model = TrainedModel("random_forest", config, forest, names, mean, scale,
                         {"seed": int(seed), "n_splits": int(np.sum(forest["feature"] >= 0))})
    resid = predict_standardized(model, Z) - y
    model.metadata["train_rmse"] = float(np.sqrt(np.mean(resid ** 2)))
    return model


def predict_standardized(model: TrainedModel, Z) -> np.ndarray:
    f = model.params
    return _predict(np.ascontiguousarray(Z, dtype=np.float64), f["feature"], f["threshold"],
                    f["left"], f["right"], f["value"], f["offsets"])


def rf_importance(model: TrainedModel) -> list[tuple[str, float]]:
    """Features ranked by total squared-error reduction, weights summing to 1."""
    if model.family != "random_forest":
        raise ValueError(f"feature importance needs a random forest, got {model.family}")
    raw = np.asarray(model.params["importance_raw"], dtype=float)
    total = raw.sum()
    if total <= 0:
        warnings.warn("forest made no splits; reporting uniform importances", stacklevel=2)
        w = np.full(raw.size, 1.0 / raw.size)
    else:
        w = raw / total
    order = sorted(range(raw.size), key=lambda i: (-w[i], i))
    return [(model.feature_names[i], float(w[i])) for i in order]


def select_features(importance, n_features: int) -> list[str]:
    """Names of the n most important features; ties keep original order."""
    if not 1 <= n_features <= len(importance):
        raise ValueError(f"N_F must be in 1..{len(importance)}, got {n_features}")
    return [name for name, _ in importance[:n_features]]
