"""Isolation Forest: random isolation trees and the normalised path-length score."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import contamination_threshold

EULER_GAMMA = 0.5772156649015329
LEAF = -1


def avg_path_length(m) -> np.ndarray | float:
    """Average path length of an unsuccessful BST search over ``m`` points.

    c(m) = 2 H(m-1) - 2 (m-1)/m with H(i) ~ ln(i) + Euler's constant;
    c(2) = 1 and c(m) = 0 for m <= 1.
    """
    m_arr = np.asarray(m, dtype=np.float64)
    out = np.zeros_like(m_arr)
    big = m_arr > 2
    mb = m_arr[big]
    out[big] = 2.0 * (np.log(mb - 1.0) + EULER_GAMMA) - 2.0 * (mb - 1.0) / mb
    out[m_arr == 2] = 1.0
    return float(out) if out.ndim == 0 else out


def score_from_path_length(mean_path: np.ndarray | float, m: int) -> np.ndarray | float:
    return np.power(2.0, -np.asarray(mean_path, dtype=np.float64) / avg_path_length(m))


@dataclass(frozen=True)
class IsolationTree:
    """Flat array encoding; ``feature[i] == LEAF`` marks an external node."""

    feature: np.ndarray
    split: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray
    depth: np.ndarray
    height_limit: int

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def leaves(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = np.ones(len(X), dtype=bool)
        while True:
            f = self.feature[node]
            active = f != LEAF
            if not active.any():
                return node
            rows = np.flatnonzero(active)
            go_left = X[rows, f[rows]] < self.split[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])

    def path_length(self, X: np.ndarray) -> np.ndarray:
        leaf = self.leaves(X)
        return self.depth[leaf] + avg_path_length(self.size[leaf])


def build_tree(X: np.ndarray, features: np.ndarray, height_limit: int, rng: np.random.Generator) -> IsolationTree:
    feature, split, left, right, size, depth = [], [], [], [], [], []

    def new_node(n, d):
        for lst, v in ((feature, LEAF), (split, np.nan), (left, LEAF), (right, LEAF), (size, n), (depth, d)):
            lst.append(v)
        return len(feature) - 1

    root = new_node(len(X), 0)
    stack = [(root, np.arange(len(X)))]
    while stack:
        node, idx = stack.pop()
        d = depth[node]
        if len(idx) <= 1 or d >= height_limit:
            continue
        sub = X[np.ix_(idx, features)]
        lo, hi = sub.min(axis=0), sub.max(axis=0)
        usable = np.flatnonzero(hi > lo)
        if usable.size == 0:
            continue
        j = usable[rng.integers(usable.size)]
        a, b = lo[j], hi[j]
        # p in (a, b] so both children are non-empty
        p = a + (1.0 - rng.random()) * (b - a)
        if p <= a:
            p = np.nextafter(a, b)
        mask = sub[:, j] < p
        q = int(features[j])
        feature[node], split[node] = q, p
        li, ri = idx[mask], idx[~mask]
        left[node] = new_node(len(li), d + 1)
        right[node] = new_node(len(ri), d + 1)
        stack.append((right[node], ri))
        stack.append((left[node], li))
    arr = lambda v, t: np.asarray(v, dtype=t)
    return IsolationTree(arr(feature, np.int64), arr(split, np.float64), arr(left, np.int64),
                         arr(right, np.int64), arr(size, np.int64), arr(depth, np.int64), height_limit)


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[IsolationTree, ...]
    m: int
    n_estimators: int
    max_features: float
    bootstrap: bool
    threshold: float
    seed: int
    n_features: int
    contamination: float | None = None

    @property
    def height_limit(self) -> int:
        return self.trees[0].height_limit


def _resolve_max_samples(max_samples, n: int) -> int:
    if max_samples in (None, "auto"):
        m = min(256, n)
    elif isinstance(max_samples, float) and max_samples <= 1.0:
        m = int(math.ceil(max_samples * n))
    else:
        m = int(max_samples)
    if not 2 <= m <= n:
        raise ValueError(f"subsample size {m} must lie in [2, {n}]")
    return m


def iforest_fit(points, n_estimators: int = 100, max_samples="auto", max_features: float = 1.0,
                bootstrap: bool = False, contamination: float | None = None, seed: int = 0,
                workers: int = 1) -> ForestModel:
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("points must be a non-empty 2-D array")
    n, d = X.shape
    if n < 2:
        raise ValueError("need at least 2 points")
    if n_estimators < 1:
        raise ValueError("n_estimators must be >= 1")
    m = _resolve_max_samples(max_samples, n)
    n_feat = min(d, max(1, int(math.ceil(float(max_features) * d))))
    height = int(math.ceil(math.log2(m)))

    def grow(t: int) -> IsolationTree:
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), t]))
        feats = np.sort(rng.choice(d, size=n_feat, replace=False))
        rows = rng.choice(n, size=m, replace=bool(bootstrap))
        return build_tree(X[rows], feats, height, rng)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            trees = tuple(ex.map(grow, range(n_estimators)))
    else:
        trees = tuple(grow(t) for t in range(n_estimators))
    model = ForestModel(trees, m, int(n_estimators), float(max_features), bool(bootstrap), 0.5, int(seed), d,
                        contamination)
    if contamination is not None and 0.0 < contamination < 1.0:
        thr = contamination_threshold(iforest_score(model, X), contamination)
        model = ForestModel(trees, m, int(n_estimators), float(max_features), bool(bootstrap), thr, int(seed),
                            d, contamination)
    return model


def mean_path_length(model: ForestModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.n_features:
        raise ValueError(f"input has {X.shape[1]} features, model expects {model.n_features}")
    total = np.zeros(len(X))
    for tree in model.trees:
        total += tree.path_length(X)
    return total / len(model.trees)


def iforest_score(model: ForestModel, X) -> np.ndarray:
    """Scores in (0, 1]; near 1 is anomalous, 0.5 or below is normal."""
    return score_from_path_length(mean_path_length(model, X), model.m)


def iforest_classify(model: ForestModel, X) -> np.ndarray:
    return iforest_score(model, X) > model.threshold
