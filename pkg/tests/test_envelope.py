import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hiveanomaly.envelope import McdError, mcd_classify, mcd_fit, robust_distance, support_size
from oracles import chi2_quantile, mcd_exhaustive


def test_support_size():
    assert support_size(500, 2, None) == 251
    assert support_size(100, 3, 0.0) == 52
    assert support_size(100, 3, 0.9) == 90
    assert support_size(100, 3, 1.0) == 100


def test_cutoff_matches_independent_chi2_quantile():
    q = math.sqrt(chi2_quantile(0.975, 2))
    assert abs(q - 2.716) < 5e-4
    X = np.random.default_rng(0).normal(size=(200, 2))
    assert abs(mcd_fit(X).cutoff - q) < 1e-9
    for p in (1, 3, 5):
        Xp = np.random.default_rng(p).normal(size=(100, p))
        assert abs(mcd_fit(Xp).cutoff - math.sqrt(chi2_quantile(0.975, p))) < 1e-9


def test_clean_gaussian_location_and_scatter():
    # a statistical bound: a rare sample (seed 7 has sample mean 0.133) may miss it
    misses, errors = 0, []
    for seed in range(40):
        X = np.random.default_rng(seed).normal(size=(500, 2))
        m = mcd_fit(X, seed=seed)
        ev = np.linalg.eigvalsh(m.scatter)
        misses += not (np.all(np.abs(m.location) < 0.15) and ev.min() >= 0.7 and ev.max() <= 1.3)
        errors.append(np.abs(m.location).max())
    assert misses <= 2
    assert np.mean(errors) < 0.06


def test_raw_estimate_without_reweighting():
    X = np.random.default_rng(0).normal(size=(500, 2))
    raw = mcd_fit(X, reweight=False)
    rew = mcd_fit(X)
    assert np.array_equal(raw.location, rew.raw_location)
    assert np.array_equal(raw.support, rew.support) and raw.log_det == rew.log_det


def test_robust_to_planted_cluster():
    for seed in range(10):
        X = np.random.default_rng(seed).normal(size=(500, 2))
        X[:50] = 20.0
        m = mcd_fit(X, seed=seed)
        assert np.all(np.abs(m.location) < 0.2)
        assert not m.support[:50].any()
        assert mcd_classify(m, X[:50]).all()


def test_one_dimensional_matches_exhaustive_subset():
    rng = np.random.default_rng(4)
    for _ in range(10):
        x = rng.standard_t(2, size=15)
        m = mcd_fit(x[:, None])
        ld, idx = mcd_exhaustive(x, m.h)
        assert abs(m.log_det - ld) < 1e-9
        assert m.raw_location[0] == pytest.approx(x[list(idx)].mean(), abs=1e-12)


def test_distance_basics():
    X = np.random.default_rng(1).normal(size=(300, 3))
    m = mcd_fit(X)
    assert robust_distance(m, m.location)[0] == 0.0
    assert not mcd_classify(m, m.location)[0]
    assert np.allclose(m.scatter, m.scatter.T, atol=1e-12)
    assert np.all(np.linalg.eigvalsh(m.scatter) > 0)
    with pytest.raises(ValueError):
        robust_distance(m, np.zeros((1, 2)))
    # identity scatter: one unit along an axis is distance 1
    from dataclasses import replace
    ident = replace(m, scatter=np.eye(3))
    assert robust_distance(ident, m.location + np.array([0, 1.0, 0]))[0] == pytest.approx(1.0)


def test_contamination_cutoff():
    X = np.random.default_rng(2).normal(size=(400, 2))
    m = mcd_fit(X, contamination=0.1)
    assert mcd_classify(m, X).sum() == 40


def test_errors():
    with pytest.raises(McdError):
        mcd_fit(np.random.default_rng(0).normal(size=(6, 3)))
    with pytest.raises(McdError):
        mcd_fit(np.random.default_rng(0).normal(size=(3, 3)))
    line = np.outer(np.arange(30.0), [1.0, 2.0])
    with pytest.raises(McdError):
        mcd_fit(line)


def test_assume_centered():
    X = np.random.default_rng(3).normal(loc=5.0, size=(200, 2))
    m = mcd_fit(X, assume_centered=True)
    assert np.array_equal(m.location, np.zeros(2))
    assert robust_distance(m, [[5.0, 5.0]])[0] > 0


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31))
def test_affine_equivariance(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(120, 2))
    A = rng.normal(size=(2, 2)) + 2 * np.eye(2)
    b = rng.normal(size=2) * 10
    Q = rng.normal(scale=3, size=(40, 2))
    m1 = mcd_fit(X, seed=seed)
    m2 = mcd_fit(X @ A.T + b, seed=seed)
    d1 = robust_distance(m1, Q)
    d2 = robust_distance(m2, Q @ A.T + b)
    assert np.allclose(d1, d2, rtol=1e-6)
    clear = np.abs(d1 - m1.cutoff) > 1e-6
    assert np.array_equal(mcd_classify(m1, Q)[clear], mcd_classify(m2, Q @ A.T + b)[clear])
