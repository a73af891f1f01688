import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hiveanomaly.lof import lof_classify, lof_fit, lof_score
from oracles import lof_reference

METRICS = ("chebyshev", "cityblock", "euclidean", "infinity", "l1", "l2", "manhattan", "minkowski")


def test_two_points():
    m = lof_fit([[0.0], [1.0]], k=1)
    assert np.allclose(m.training_scores, 1.0)


def test_grid_interior_inlier():
    g = np.array([[i, j] for i in range(10) for j in range(10)], dtype=float)
    m = lof_fit(g, k=4)
    assert abs(lof_score(m, [[4.5, 4.5]])[0] - 1.0) < 0.05
    interior = m.training_scores.reshape(10, 10)[2:8, 2:8]
    assert np.all(np.abs(interior - 1) < 0.05)


def test_far_point_and_cluster_queries():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(0, 0.1, size=(20, 2)), [[5.0, 5.0]]])
    m = lof_fit(X, k=3)
    ref = lof_reference(X, 3, "euclidean")
    assert np.allclose(m.training_scores, ref, rtol=0, atol=1e-9)
    assert m.training_scores[-1] > 1
    sym = np.array([[1, 0], [-1, 0], [0, 1], [0, -1], [1, 1], [-1, -1], [1, -1], [-1, 1]], dtype=float)
    ms = lof_fit(sym, k=3)
    assert lof_score(ms, [[0.0, 0.0]])[0] <= 1 + 1e-9
    assert lof_score(ms, [[300.0, 0.0]])[0] > 1
    # duplicate of a reference point in a uniform cluster
    u = np.array([[i, j] for i in range(6) for j in range(6)], dtype=float)
    mu = lof_fit(u, k=4)
    assert abs(lof_score(mu, [[2.0, 3.0]])[0] - 1) < 0.1


def test_duplicates_do_not_blow_up():
    X = np.array([[0.0, 0.0]] * 5 + [[1.0, 1.0]])
    m = lof_fit(X, k=2)
    assert np.all(np.isfinite(m.training_scores))


def test_classify_and_contamination_threshold():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(100, 3))
    m = lof_fit(X, k=10, contamination=0.1)
    q = np.quantile(m.training_scores, 0.9, method="inverted_cdf")
    assert m.threshold == q
    assert (m.training_scores > m.threshold).sum() == 10
    m1 = lof_fit(X, k=10)
    assert m1.threshold == 1.0
    s = lof_score(m1, X[:5])
    assert np.array_equal(lof_classify(m1, X[:5]), s > 1.0)


def test_errors():
    with pytest.raises(ValueError):
        lof_fit([[0.0], [1.0]], k=2)
    with pytest.raises(ValueError):
        lof_fit([[0.0], [1.0], [2.0]], k=1, metric="cosine")
    m = lof_fit(np.zeros((5, 2)) + np.arange(5)[:, None], k=2)
    with pytest.raises(ValueError):
        lof_score(m, [[0.0, 0.0, 0.0]])


def test_query_scores_match_oracle():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(60, 3))
    Q = rng.normal(scale=2, size=(15, 3))
    for metric in METRICS:
        m = lof_fit(X, k=5, metric=metric)
        assert np.allclose(lof_score(m, Q), lof_reference(X, 5, metric, Q), rtol=0, atol=1e-9)


def test_metric_aliases():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(40, 4))
    for group in (("l1", "cityblock", "manhattan"), ("l2", "euclidean"), ("infinity", "chebyshev")):
        scores = [lof_fit(X, k=5, metric=g).training_scores for g in group]
        for s in scores[1:]:
            assert np.array_equal(s, scores[0])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 8), st.sampled_from(METRICS), st.booleans())
def test_permutation_and_index_independence(seed, k, metric, grid):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(k + 2, 60))
    # integer grids give plenty of distance ties
    X = rng.integers(0, 4, size=(n, 2)).astype(float) if grid else rng.normal(size=(n, 2))
    Q = rng.normal(size=(5, 2))
    base = lof_fit(X, k=k, metric=metric)
    perm = rng.permutation(n)
    permuted = lof_fit(X[perm], k=k, metric=metric)
    assert np.allclose(permuted.training_scores, base.training_scores[perm], rtol=1e-12, atol=1e-12)
    assert np.allclose(lof_score(permuted, Q), lof_score(base, Q), rtol=1e-12, atol=1e-12)
    for algorithm in ("ball_tree", "kd_tree"):
        tree = lof_fit(X, k=k, metric=metric, algorithm=algorithm, leaf_size=int(rng.integers(1, 40)))
        assert np.allclose(tree.training_scores, base.training_scores, rtol=1e-12, atol=1e-12)
        assert np.allclose(lof_score(tree, Q), lof_score(base, Q), rtol=1e-12, atol=1e-12)
