import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hiveanomaly.core import SensorTrace
from hiveanomaly.rba import RbaConfig, rba_detect, vet_training_data
from oracles import rba_runs


def excursion(first, count, n=60, hot=36.0):
    x = np.full(n, 34.5)
    x[first:first + count] = hot
    return x


def test_rule_examples():
    assert rba_detect(np.full(60, 34.5)) == []
    assert rba_detect(excursion(10, 10)) == [(10, 19)]
    assert rba_detect(excursion(10, 25)) == []
    assert rba_detect(excursion(10, 1)) == []


def test_boundaries():
    assert rba_detect(excursion(10, 2)) == [(10, 11)]
    assert rba_detect(excursion(10, 20)) == [(10, 29)]
    assert rba_detect(excursion(10, 21)) == []
    # strictly above
    assert rba_detect(excursion(10, 5, hot=35.5)) == []
    # a run cut by the window edge has unknown duration
    assert rba_detect(excursion(0, 5)) == []
    assert rba_detect(excursion(55, 5)) == []
    with pytest.raises(ValueError):
        rba_detect([])


def test_random_traces_match_oracle():
    rng = np.random.default_rng(20240)
    for _ in range(1000):
        n = int(rng.integers(1, 120))
        # blocky traces so that runs of every length show up
        x = np.repeat(rng.choice([34.5, 35.5, 35.6, 36.2], size=n), rng.integers(1, 8, size=n))[:n]
        assert rba_detect(x) == rba_runs(x)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from([34.0, 35.5, 36.0]), min_size=1, max_size=80),
       st.floats(-10, 10, allow_nan=False), st.integers(1, 10), st.integers(1, 10))
def test_properties(values, c, before, after):
    x = np.array([34.0] + values + [34.0])
    found = rba_detect(x)
    # translation equivariance
    shifted = rba_detect(x + c, RbaConfig(threshold=35.5 + c))
    assert shifted == found
    # padding with sub-threshold samples only shifts indices
    padded = np.concatenate([np.full(before, 30.0), x, np.full(after, 30.0)])
    assert rba_detect(padded) == [(a + before, b + before) for a, b in found]
    for a, b in found:
        assert 2 <= b - a + 1 <= 20


def test_vetting_names_the_sensor():
    n = 300
    v = np.full((n, 3), 34.5)
    v[100:110, 1] = 36.0
    t = SensorTrace(("T6", "T7", "T8"), np.arange(5000, 5000 + n), v, "h")
    assert vet_training_data(t) == {"T7": [(5100, 5109)]}
    assert vet_training_data(t.with_values(np.full((n, 3), 34.5))) == {}


def test_config_validation():
    with pytest.raises(ValueError):
        RbaConfig(min_duration=0)
    with pytest.raises(ValueError):
        RbaConfig(min_duration=5, max_duration=4)
    with pytest.raises(ValueError):
        RbaConfig(threshold=float("inf"))
