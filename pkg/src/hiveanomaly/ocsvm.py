"""One-Class SVM (nu formulation) solved with SMO-style two-coordinate updates.

Dual problem::

    min_a  1/2 a^T Q a    s.t.  0 <= a_i <= 1/(nu n),  sum(a) = 1

with Q_ij = K(x_i, x_j).  The decision value of x is sum_i a_i K(x_i, x) - rho.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

KERNELS = ("linear", "poly", "rbf", "sigmoid")
FULL_GRAM_LIMIT = 4096
MAX_ITER = 1_000_000
TOL = 1e-4
TAU = 1e-12


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    gamma: float = 1.0
    degree: int = 3
    coef0: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in KERNELS:
            raise ValueError(f"unknown kernel {self.kind!r}")
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")

    def __call__(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        """Kernel matrix between the rows of A and B."""
        if self.kind == "rbf":
            d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
            return np.exp(-self.gamma * np.maximum(d2, 0.0))
        dot = A @ B.T
        if self.kind == "linear":
            return dot
        if self.kind == "poly":
            return (self.gamma * dot + self.coef0) ** self.degree
        return np.tanh(self.gamma * dot + self.coef0)


@dataclass(frozen=True)
class OcsvmModel:
    support_vectors: np.ndarray
    dual_coef: np.ndarray
    rho: float
    kernel: KernelSpec
    nu: float
    shrinking: bool
    tol: float
    n_train: int
    n_iter: int
    objective: float
    support_index: np.ndarray

    @property
    def n_features(self) -> int:
        return self.support_vectors.shape[1]


class _KernelRows:
    """Kernel rows on demand: a full Gram matrix for small n, an LRU row cache otherwise.

    Both paths compute a row with the same expression, so results never depend on the policy.
    """

    def __init__(self, X, kernel, full_limit=FULL_GRAM_LIMIT, cache_rows=1024):
        self.X, self.kernel = X, kernel
        n = len(X)
        self.diag = np.array([kernel(X[i:i + 1], X[i:i + 1])[0, 0] for i in range(n)])
        self.full = None
        if n <= full_limit:
            self.full = np.empty((n, n))
            for i in range(n):
                self.full[i] = self._compute(i)
        self.cache: OrderedDict[int, np.ndarray] = OrderedDict()
        self.cache_rows = max(2, cache_rows)

    def _compute(self, i):
        return self.kernel(self.X[i:i + 1], self.X)[0]

    def row(self, i):
        if self.full is not None:
            return self.full[i]
        r = self.cache.get(i)
        if r is None:
            r = self._compute(i)
            self.cache[i] = r
            if len(self.cache) > self.cache_rows:
                self.cache.popitem(last=False)
        else:
            self.cache.move_to_end(i)
        return r


def _bounds(alpha, C):
    up = alpha < C          # may increase
    low = alpha > 0         # may decrease
    return up, low


def _solve(rows: _KernelRows, n: int, C: float, tol: float, shrinking: bool, max_iter: int):
    alpha = np.zeros(n)
    k = int(np.floor(1.0 / C + 1e-12))
    alpha[:min(k, n)] = C
    if k < n:
        alpha[k] = 1.0 - k * C
    grad = np.zeros(n)
    for i in np.flatnonzero(alpha):
        grad += alpha[i] * rows.row(i)

    active = np.ones(n, dtype=bool)
    shrink_every = min(n, 1000)
    counter = shrink_every
    it = 0
    while it < max_iter:
        if shrinking:
            counter -= 1
            if counter == 0:
                counter = shrink_every
                active = _shrink(alpha, grad, C, active)
        up, low = _bounds(alpha, C)
        up &= active
        low &= active
        gi = np.where(up, grad, np.inf)
        gj = np.where(low, grad, -np.inf)
        i = int(np.argmin(gi))
        j = int(np.argmax(gj))
        if gj[j] - gi[i] <= tol:
            if shrinking and not active.all():
                active[:] = True
                counter = shrink_every
                continue
            break
        it += 1
        Qi, Qj = rows.row(i), rows.row(j)
        quad = rows.diag[i] + rows.diag[j] - 2.0 * Qi[j]
        if quad <= 0:
            quad = TAU
        # move t units of mass from j to i
        t = (grad[j] - grad[i]) / quad
        t = min(t, C - alpha[i], alpha[j])
        alpha[i] += t
        alpha[j] -= t
        if alpha[j] < 1e-15 * C:
            alpha[j] = 0.0
        if C - alpha[i] < 1e-15 * C:
            alpha[i] = C
        grad += t * (Qi - Qj)
    else:
        raise ConvergenceError(f"SMO did not reach KKT tolerance {tol} within {max_iter} iterations")
    return alpha, grad, it


def _shrink(alpha, grad, C, active):
    up, low = _bounds(alpha, C)
    m = grad[up & active].min(initial=np.inf)
    M = grad[low & active].max(initial=-np.inf)
    at_upper = alpha >= C
    at_lower = alpha <= 0
    # bounded variables that cannot take part in a violating pair
    drop = (at_upper & (grad < m)) | (at_lower & (grad > M))
    new = active & ~drop
    return new if new.any() else active


def _rho(alpha, grad, C):
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(grad[free].mean())
    ub = grad[alpha <= 0].min(initial=np.inf)
    lb = grad[alpha >= C].max(initial=-np.inf)
    if not np.isfinite(ub):
        return float(lb)
    if not np.isfinite(lb):
        return float(ub)
    return float(0.5 * (ub + lb))


def ocsvm_fit(points, kernel: KernelSpec | None = None, nu: float = 0.5, shrinking: bool = True,
              tolerance: float = TOL, seed: int = 0, max_iter: int = MAX_ITER,
              full_gram_limit: int = FULL_GRAM_LIMIT, cache_rows: int = 1024) -> OcsvmModel:
    """Fit the one-class dual.  ``seed`` is accepted for interface symmetry; the solver is deterministic."""
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("points must be a 2-D array")
    n = len(X)
    if n < 2:
        raise ValueError("need at least 2 points")
    if not 0.0 < nu <= 1.0:
        raise ValueError("nu must lie in (0, 1]")
    if kernel is None:
        var = X.var()
        kernel = KernelSpec("rbf", 1.0 / (X.shape[1] * var) if var > 0 else 1.0)
    C = 1.0 / (nu * n)
    rows = _KernelRows(X, kernel, full_gram_limit, cache_rows)
    alpha, grad, it = _solve(rows, n, C, tolerance, shrinking, max_iter)
    rho = _rho(alpha, grad, C)
    sv = np.flatnonzero(alpha > 0)
    objective = 0.5 * float(alpha @ grad)
    return OcsvmModel(X[sv].copy(), alpha[sv].copy(), rho, kernel, float(nu), bool(shrinking), float(tolerance),
                      n, it, objective, sv)


def ocsvm_decision(model: OcsvmModel, x) -> np.ndarray:
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if X.shape[1] != model.n_features:
        raise ValueError(f"input has {X.shape[1]} features, model expects {model.n_features}")
    out = np.empty(len(X))
    for c0 in range(0, len(X), 1024):
        out[c0:c0 + 1024] = model.kernel(X[c0:c0 + 1024], model.support_vectors) @ model.dual_coef
    return out - model.rho


def ocsvm_classify(model: OcsvmModel, x) -> np.ndarray:
    """True marks an anomaly (negative decision value)."""
    return ocsvm_decision(model, x) < 0


def kkt_violation(model_alpha: np.ndarray, grad: np.ndarray, C: float) -> float:
    up, low = _bounds(model_alpha, C)
    return float(grad[low].max(initial=-np.inf) - grad[up].min(initial=np.inf))
