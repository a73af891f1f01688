"""Local Outlier Factor with exact neighbour search (exhaustive or tree-backed)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.neighbors import BallTree, KDTree

from .core import contamination_threshold

EPS = 1e-12
MINKOWSKI_DEFAULT_P = 3.0

# tag -> (cdist metric, minkowski p used for the tree index)
_METRICS = {
    "l1": ("cityblock", 1.0),
    "cityblock": ("cityblock", 1.0),
    "manhattan": ("cityblock", 1.0),
    "l2": ("euclidean", 2.0),
    "euclidean": ("euclidean", 2.0),
    "infinity": ("chebyshev", np.inf),
    "chebyshev": ("chebyshev", np.inf),
    "minkowski": ("minkowski", None),
}
ALGORITHMS = ("brute", "ball_tree", "kd_tree")


def canonical_metric(metric: str, p: float | None = None) -> tuple[str, float]:
    try:
        name, fixed_p = _METRICS[metric]
    except KeyError:
        raise ValueError(f"unknown metric {metric!r}; expected one of {sorted(_METRICS)}") from None
    if fixed_p is None:
        fixed_p = float(p) if p is not None else MINKOWSKI_DEFAULT_P
    return name, fixed_p


def pairwise(a: np.ndarray, b: np.ndarray, metric: str, p: float) -> np.ndarray:
    if metric == "minkowski":
        return cdist(a, b, "minkowski", p=p)
    return cdist(a, b, metric)


@dataclass(frozen=True)
class LofModel:
    points: np.ndarray
    k: int
    metric: str
    p: float
    threshold: float
    algorithm: str = "brute"
    leaf_size: int = 30
    contamination: float | None = None
    k_distance: np.ndarray | None = None
    lrd: np.ndarray | None = None
    training_scores: np.ndarray | None = None

    @property
    def n_features(self) -> int:
        return self.points.shape[1]


class _Neighbors:
    """Exact k-neighbourhoods with ties included; distances always come from cdist."""

    def __init__(self, points, metric, p, algorithm, leaf_size):
        self.points = points
        self.metric, self.p = metric, p
        self.tree = None
        if algorithm != "brute":
            cls = BallTree if algorithm == "ball_tree" else KDTree
            tm = {"cityblock": "manhattan", "euclidean": "euclidean", "chebyshev": "chebyshev"}.get(metric)
            kw = {"metric": tm} if tm else {"metric": "minkowski", "p": p}
            self.tree = cls(points, leaf_size=max(1, int(leaf_size)), **kw)

    def query(self, queries, k, exclude_self=False, chunk=512):
        """Yield (k_distance, neighbour indices, neighbour distances) per query row."""
        n = len(self.points)
        for c0 in range(0, len(queries), chunk):
            q = queries[c0:c0 + chunk]
            if self.tree is None:
                d = pairwise(q, self.points, self.metric, self.p)
                cand = [None] * len(q)
            else:
                kk = min(n, k + 1 if exclude_self else k)
                dk, _ = self.tree.query(q, k=kk)
                r = dk[:, -1] * (1 + 1e-9) + 1e-300
                cand = self.tree.query_radius(q, r)
                d = None
            for i in range(len(q)):
                if cand[i] is None:
                    idx = np.arange(n)
                    dist = d[i]
                else:
                    idx = np.sort(cand[i])
                    dist = pairwise(q[i:i + 1], self.points[idx], self.metric, self.p)[0]
                if exclude_self:
                    keep = idx != c0 + i
                    idx, dist = idx[keep], dist[keep]
                kd = np.partition(dist, k - 1)[k - 1]
                sel = dist <= kd
                yield kd, idx[sel], dist[sel]


def _lrd(kd_neighbors: np.ndarray, dist: np.ndarray) -> float:
    reach = np.maximum(np.maximum(kd_neighbors, dist), EPS)
    return 1.0 / reach.mean()


def lof_fit(points, k: int = 20, metric: str = "euclidean", contamination: float | None = None,
            algorithm: str = "brute", leaf_size: int = 30, p: float | None = None) -> LofModel:
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("points must be a 2-D array")
    n = len(X)
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k + 1:
        raise ValueError(f"need at least k+1={k + 1} points, got {n}")
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    mname, mp = canonical_metric(metric, p)
    nb = _Neighbors(X, mname, mp, algorithm, leaf_size)
    hoods = list(nb.query(X, k, exclude_self=True))
    kdist = np.array([h[0] for h in hoods])
    lrd = np.array([_lrd(kdist[idx], dist) for _, idx, dist in hoods])
    scores = np.array([lrd[idx].mean() / lrd[i] for i, (_, idx, _) in enumerate(hoods)])
    if contamination is not None and 0.0 < contamination < 0.5:
        threshold = contamination_threshold(scores, contamination)
    else:
        threshold = 1.0
    frozen = []
    for a in (X, kdist, lrd, scores):
        a = a.copy()
        a.setflags(write=False)
        frozen.append(a)
    return LofModel(frozen[0], int(k), mname, mp, float(threshold), algorithm, int(leaf_size),
                    contamination, frozen[1], frozen[2], frozen[3])


def lof_score(model: LofModel, query) -> np.ndarray:
    """LOF of each query row against the reference set."""
    Q = np.atleast_2d(np.asarray(query, dtype=np.float64))
    if Q.shape[1] != model.n_features:
        raise ValueError(f"query has {Q.shape[1]} features, model expects {model.n_features}")
    nb = _Neighbors(model.points, model.metric, model.p, model.algorithm, model.leaf_size)
    out = np.empty(len(Q))
    for i, (_, idx, dist) in enumerate(nb.query(Q, model.k)):
        lrd_q = _lrd(model.k_distance[idx], dist)
        out[i] = model.lrd[idx].mean() / lrd_q
    return out


def lof_classify(model: LofModel, query) -> np.ndarray:
    """True marks an anomaly."""
    return lof_score(model, query) > model.threshold
