"""Slow, direct reference implementations used to cross-check the package."""

import itertools
import math

import numpy as np


def distance(a, b, metric, p=3.0):
    diff = [abs(x - y) for x, y in zip(a, b)]
    if metric in ("l1", "cityblock", "manhattan"):
        return sum(diff)
    if metric in ("l2", "euclidean"):
        return math.sqrt(sum(d * d for d in diff))
    if metric in ("infinity", "chebyshev"):
        return max(diff)
    if metric == "minkowski":
        return sum(d ** p for d in diff) ** (1.0 / p)
    raise ValueError(metric)


def rba_runs(x, threshold=35.5, lo=2, hi=20):
    """Plain loop over maximal runs, dropping those touching an edge."""
    out, i, n = [], 0, len(x)
    while i < n:
        if x[i] > threshold:
            j = i
            while j + 1 < n and x[j + 1] > threshold:
                j += 1
            if i > 0 and j < n - 1 and lo <= j - i + 1 <= hi:
                out.append((i, j))
            i = j + 1
        else:
            i += 1
    return out


def lof_reference(points, k, metric, queries=None, eps=1e-12):
    """LOF straight from the definitions: k-distance, tie-inclusive k-neighbourhood,
    reachability distance, local reachability density and their ratio.

    Without ``queries`` returns the training scores (each point excluded from its own
    neighbourhood); otherwise the scores of the query rows against ``points``.
    """
    pts = [list(map(float, r)) for r in points]
    n = len(pts)
    D = [[distance(pts[i], pts[j], metric) for j in range(n)] for i in range(n)]

    def hood(dists, skip):
        cand = sorted(d for j, d in enumerate(dists) if j != skip)
        kd = cand[k - 1]
        return kd, [j for j, d in enumerate(dists) if j != skip and d <= kd]

    kdist, hoods = [], []
    for i in range(n):
        kd, h = hood(D[i], i)
        kdist.append(kd)
        hoods.append(h)

    def lrd(dists, h):
        reach = [max(kdist[o], dists[o], eps) for o in h]
        return len(reach) / sum(reach)

    lrds = [lrd(D[i], hoods[i]) for i in range(n)]
    if queries is None:
        return np.array([sum(lrds[o] for o in hoods[i]) / len(hoods[i]) / lrds[i] for i in range(n)])
    out = []
    for q in queries:
        dq = [distance(list(map(float, q)), pts[j], metric) for j in range(n)]
        _, h = hood(dq, -1)
        out.append(sum(lrds[o] for o in h) / len(h) / lrd(dq, h))
    return np.array(out)


def bst_average_depth(m):
    """Average unsuccessful-search path length in a BST built from m keys, by
    enumerating every insertion order (m! orders; keep m small)."""
    total, count = 0, 0
    for order in itertools.permutations(range(m)):
        # insert keys, then record the depth of each of the m+1 external gaps
        tree = {}
        root = None
        for key in order:
            if root is None:
                root = key
                tree[key] = [None, None]
                continue
            node = root
            while True:
                side = 0 if key < node else 1
                if tree[node][side] is None:
                    tree[node][side] = key
                    tree[key] = [None, None]
                    break
                node = tree[node][side]
        # an unsuccessful search for a value in gap g (between keys g-1 and g)
        for g in range(m + 1):
            depth, node = 0, root
            while node is not None:
                depth += 1
                node = tree[node][0] if g <= node else tree[node][1]
            total += depth
            count += 1
    return total / count


def mcd_exhaustive(X, h, centered=False):
    """Smallest scatter log-determinant over every h-subset, with the subset."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    combos = np.array(list(itertools.combinations(range(len(X)), h)))
    best = (np.inf, None)
    for chunk in np.array_split(combos, max(1, len(combos) // 20000)):
        sub = X[chunk]
        loc = np.zeros((len(sub), 1, X.shape[1])) if centered else sub.mean(axis=1, keepdims=True)
        r = sub - loc
        cov = np.einsum("cki,ckj->cij", r, r) / h
        sign, ld = np.linalg.slogdet(cov)
        ld = np.where(sign > 0, ld, np.inf)
        i = int(np.argmin(ld))
        if ld[i] < best[0]:
            best = (float(ld[i]), tuple(chunk[i]))
    return best


def chi2_quantile(q, df, lo=0.0, hi=100.0):
    """Bisection on a chi-square CDF written via the regularised lower gamma series."""

    def cdf(x):
        if x <= 0:
            return 0.0
        a = df / 2.0
        t = x / 2.0
        term = 1.0 / a
        s = term
        n = 1
        while term > 1e-17 * s:
            term *= t / (a + n)
            s += term
            n += 1
        return math.exp(-t + a * math.log(t) - math.lgamma(a)) * s

    for _ in range(200):
        mid = (lo + hi) / 2
        if cdf(mid) < q:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def ocsvm_dual_bruteforce(K, nu, iters=200_000, tol=1e-12):
    """min 1/2 a'Ka  s.t. 0 <= a_i <= 1/(nu n), sum a = 1, by projected gradient
    with an exact projection onto the capped simplex (bisection on the shift)."""
    n = len(K)
    C = 1.0 / (nu * n)

    def project(v):
        lo, hi = v.min() - C - 1.0, v.max() + 1.0
        for _ in range(200):
            mid = (lo + hi) / 2
            if np.clip(v - mid, 0, C).sum() > 1.0:
                lo = mid
            else:
                hi = mid
        return np.clip(v - (lo + hi) / 2, 0, C)

    a = project(np.full(n, 1.0 / n))
    L = max(np.linalg.eigvalsh(K).max(), 1e-12)
    # accelerated projected gradient
    y, t = a.copy(), 1.0
    prev = np.inf
    for _ in range(iters):
        a_new = project(y - (K @ y) / L)
        t_new = (1 + math.sqrt(1 + 4 * t * t)) / 2
        y = a_new + (t - 1) / t_new * (a_new - a)
        a, t = a_new, t_new
        obj = 0.5 * a @ K @ a
        if abs(prev - obj) < tol:
            break
        prev = obj
    return a, 0.5 * a @ K @ a
