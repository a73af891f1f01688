"""Elliptic Envelope on top of a FastMCD robust location/scatter estimate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

from .core import contamination_threshold

N_RESTARTS = 30
N_BEST = 5
MAX_CSTEPS = 30
DET_TOL = 1e-7
CUTOFF_QUANTILE = 0.975


class McdError(ValueError):
    pass


@dataclass(frozen=True)
class McdModel:
    location: np.ndarray
    scatter: np.ndarray
    raw_scatter: np.ndarray
    support: np.ndarray
    h: int
    cutoff: float
    assume_centered: bool = False
    support_fraction: float | None = None
    contamination: float | None = None
    consistency: float = 1.0
    log_det: float = float("nan")
    # log-determinant after every C-step of the winning candidate
    det_history: tuple[float, ...] = field(default=(), repr=False)
    # every candidate's log-determinant trajectory, for diagnostics
    all_histories: tuple[tuple[float, ...], ...] = field(default=(), repr=False)
    # location of the raw MCD support before the reweighting step
    raw_location: np.ndarray | None = None
    reweight: bool = True

    @property
    def n_features(self) -> int:
        return len(self.location)


def support_size(n: int, p: int, support_fraction: float | None) -> int:
    lo = (n + p + 1) // 2
    if support_fraction is None:
        return lo
    frac = min(1.0, max(float(support_fraction), (n + p + 1) / (2.0 * n)))
    return min(n, max(lo, int(math.ceil(frac * n))))


def consistency_factor(h: int, n: int, p: int) -> float:
    """Scale making the h-subset covariance consistent at the normal model."""
    alpha = h / n
    if alpha >= 1.0:
        return 1.0
    q = chi2.ppf(alpha, p)
    return alpha / chi2.cdf(q, p + 2)


def _estimate(X: np.ndarray, idx: np.ndarray, centered: bool) -> tuple[np.ndarray, np.ndarray]:
    sub = X[idx]
    loc = np.zeros(X.shape[1]) if centered else sub.mean(axis=0)
    r = sub - loc
    cov = r.T @ r / len(idx)
    return loc, 0.5 * (cov + cov.T)


def _sq_distances(X: np.ndarray, loc: np.ndarray, cov: np.ndarray) -> np.ndarray:
    L = np.linalg.cholesky(cov)
    z = np.linalg.solve(L, (X - loc).T)
    return np.einsum("ij,ij->j", z, z)


def _logdet(cov: np.ndarray) -> float:
    sign, ld = np.linalg.slogdet(cov)
    return ld if sign > 0 else -np.inf


def _h_smallest(d2: np.ndarray, h: int) -> np.ndarray:
    return np.sort(np.argsort(d2, kind="stable")[:h])


def _cstep(X, idx, h, centered):
    loc, cov = _estimate(X, idx, centered)
    return _h_smallest(_sq_distances(X, loc, cov), h)


def _start(X, h, centered, rng) -> np.ndarray | None:
    """Random (p+1)-subset grown until its scatter is nonsingular, then the h closest points."""
    n, p = X.shape
    perm = rng.permutation(n)
    k = p + 1
    while k <= n:
        loc, cov = _estimate(X, perm[:k], centered)
        if _logdet(cov) > -np.inf and np.linalg.matrix_rank(cov) == p:
            try:
                return _h_smallest(_sq_distances(X, loc, cov), h)
            except np.linalg.LinAlgError:
                pass
        k += 1
    return None


def _iterate(X, idx, h, centered, steps, tol):
    """Run C-steps from support ``idx``; returns (support, logdet history)."""
    _, cov = _estimate(X, idx, centered)
    hist = [_logdet(cov)]
    for _ in range(steps):
        new = _cstep(X, idx, h, centered)
        _, cov = _estimate(X, new, centered)
        ld = _logdet(cov)
        hist.append(ld)
        same = np.array_equal(new, idx)
        idx = new
        if same or abs(math.expm1(ld - hist[-2])) < tol:
            break
    return idx, hist


def mcd_fit(points, assume_centered: bool = False, support_fraction: float | None = None,
            contamination: float | None = None, seed: int = 0, n_restarts: int = N_RESTARTS,
            n_best: int = N_BEST, max_iter: int = MAX_CSTEPS, tol: float = DET_TOL,
            reweight: bool = True) -> McdModel:
    """FastMCD fit: random starts, two C-steps each, full iteration of the best few.

    With ``reweight`` the final estimate is recomputed from every point whose
    raw robust distance lies inside the 0.975 chi-square cutoff.
    """
    try:
        return _fit(points, assume_centered, support_fraction, contamination, seed, n_restarts, n_best,
                    max_iter, tol, reweight)
    except np.linalg.LinAlgError as exc:
        raise McdError(f"singular scatter: {exc}") from exc


def _fit(points, assume_centered, support_fraction, contamination, seed, n_restarts, n_best, max_iter, tol,
         reweight):
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if n <= p:
        raise McdError(f"n={n} must exceed p={p}")
    if n <= 2 * p:
        raise McdError(f"n={n} <= 2p={2 * p}: too few samples for a stable {p}-dimensional MCD fit")
    h = support_size(n, p, support_fraction)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x3CD]))

    candidates = []
    for r in range(n_restarts):
        start = _start(X, h, assume_centered, rng)
        if start is None:
            continue
        idx, hist = _iterate(X, start, h, assume_centered, 2, 0.0)
        candidates.append((hist[-1], r, idx, hist))
    if not candidates:
        raise McdError("singular scatter: every subsample is degenerate (collinear data?)")
    candidates.sort(key=lambda c: (c[0], c[1]))
    finished = []
    for ld, r, idx, hist in candidates[:n_best]:
        idx2, hist2 = _iterate(X, idx, h, assume_centered, max_iter, tol)
        finished.append((hist2[-1], r, idx2, tuple(hist) + tuple(hist2[1:])))
    finished.sort(key=lambda c: (c[0], c[1]))
    best_ld, _, support, history = finished[0]
    if not np.isfinite(best_ld):
        raise McdError("singular scatter on the optimal support")

    raw_loc, raw = _estimate(X, support, assume_centered)
    factor = consistency_factor(h, n, p)
    loc, scatter = raw_loc, raw * factor
    if reweight:
        keep = np.flatnonzero(_sq_distances(X, loc, scatter) <= chi2.ppf(CUTOFF_QUANTILE, p))
        if len(keep) > p:
            rloc, rcov = _estimate(X, keep, assume_centered)
            if np.isfinite(_logdet(rcov)):
                loc, scatter = rloc, rcov * consistency_factor(len(keep), n, p)
    mask = np.zeros(n, dtype=bool)
    mask[support] = True
    cutoff = math.sqrt(chi2.ppf(CUTOFF_QUANTILE, p))
    if contamination is not None and 0.0 < contamination < 1.0:
        cutoff = contamination_threshold(np.sqrt(_sq_distances(X, loc, scatter)), contamination)
    all_hist = tuple(c[3] for c in finished)
    return McdModel(loc, scatter, raw, mask, h, float(cutoff), bool(assume_centered), support_fraction,
                    contamination, factor, float(best_ld), history, all_hist, raw_loc, bool(reweight))


def robust_distance(model: McdModel, x) -> np.ndarray:
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if X.shape[1] != model.n_features:
        raise ValueError(f"input has {X.shape[1]} features, model expects {model.n_features}")
    return np.sqrt(_sq_distances(X, model.location, model.scatter))


def mcd_classify(model: McdModel, x) -> np.ndarray:
    return robust_distance(model, x) > model.cutoff
