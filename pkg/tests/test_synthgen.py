import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hiveanomaly.core import SWARM, MINUTES_PER_DAY, scan_windows
from hiveanomaly.rba import rba_detect
from hiveanomaly.synthgen import (
    SWARM_THRESHOLD, EventTemplate, HiveProfile, HiveScenario, Scenario, ScenarioError, generate_normal,
    inject_event, make_benchmark, full_scale_scenario, split_swarm_windows, swarm_layout, window_count,
)


def test_normal_traces_stay_inside_the_band():
    p = HiveProfile(seed=3)
    t = generate_normal(p, days=3)
    temps = t.values[:, :3]
    assert temps.min() >= p.core - 0.95 and temps.max() <= p.core + 0.95
    assert not rba_detect(temps.max(axis=1))
    assert len(t) == 3 * MINUTES_PER_DAY and t.start % MINUTES_PER_DAY == 0


def test_neighbouring_sensors_are_correlated():
    t = generate_normal(HiveProfile(seed=1), days=2)
    r = np.corrcoef(t.values[:, :3].T)
    assert r[0, 1] > 0.8 and r[1, 2] > 0.8


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(20, 60), st.integers(2, 20))
def test_swarm_super_threshold_segment_is_exact(seed, duration, above):
    p = HiveProfile(seed=seed, sensors=("T7",), weight_sensor=None)
    base = generate_normal(p, days=1)
    tpl = EventTemplate("swarm", base.start + 300, duration, above=above, seed=seed)
    try:
        pre, span, _ = swarm_layout(tpl)
    except ValueError:
        return
    trace, ev = inject_event(base, tpl, weight_sensor=None)
    x = trace.values[:, 0]
    runs = rba_detect(x)
    q = (span - above) // 2
    first = 300 + pre + q
    assert runs == [(first, first + above - 1)]
    assert ev.kind == SWARM and (ev.start, ev.end) == (tpl.onset, tpl.end)
    assert np.sum(x > SWARM_THRESHOLD) == above


def test_opened_hive_cools_without_triggering_rba():
    base = generate_normal(HiveProfile(seed=5), days=1)
    tpl = EventTemplate("opened_hive", base.start + 400, 90)
    trace, ev = inject_event(base, tpl)
    seg = trace.values[400:490, :3]
    assert seg.min() < 33.0
    assert all(not rba_detect(trace.values[:, j]) for j in range(3))
    assert ev.kind == "other_anomaly" and ev.detail == "opened_hive"
    assert trace.values[450, 3] < base.values[450, 3] - 3


def test_treatment_stays_below_threshold():
    base = generate_normal(HiveProfile(seed=6), days=1)
    trace, ev = inject_event(base, EventTemplate("treatment", base.start + 200, 60))
    assert trace.values[:, :3].max() < SWARM_THRESHOLD
    assert ev.detail == "treatment"


def test_dropout_windows_are_excluded():
    base = generate_normal(HiveProfile(seed=2), days=1)
    trace, ev = inject_event(base, EventTemplate("sensor_dropout", base.start + 600, 45))
    assert np.isnan(trace.values[600:645, :3]).all()
    windows, excluded = scan_windows(trace, ["T6", "T7", "T8"], 60, 15, [ev])
    assert excluded and all(s + 60 > trace.start + 600 and s < trace.start + 645 for s in excluded)
    assert len(windows) + len(excluded) == (MINUTES_PER_DAY - 60) // 15 + 1


def test_overlapping_events_rejected():
    base = generate_normal(HiveProfile(seed=0), days=1)
    trace, ev = inject_event(base, EventTemplate("treatment", base.start + 200, 60))
    with pytest.raises(ValueError):
        inject_event(trace, EventTemplate("opened_hive", base.start + 230, 60), [ev])
    with pytest.raises(ValueError):
        inject_event(trace, EventTemplate("treatment", base.end - 10, 60))


def test_window_count_matches_the_labeller():
    for onset in range(100, 160):
        for d in (20, 37, 60):
            n = sum(1 for s in range(0, 400, 15) if s < onset + d and s + 60 > onset)
            assert window_count(onset, d, 60, 15) == n


def test_full_scale_benchmark_has_24_and_8_swarm_windows():
    bench = make_benchmark(HiveProfile(), full_scale_scenario(seed=0))
    for hive, expected in (("bad_schwartau", 24), ("wurzburg", 8)):
        trace, labels = bench.traces[hive], bench.labels[hive]
        windows, _ = scan_windows(trace, ["T6", "T7", "T8"], 60, 15, labels)
        anomalous = [e for e in labels if e.kind == "anomalous_day"]
        in_days = [w for w in windows if any(d.start <= w.start and w.start + 60 <= d.end for d in anomalous)]
        assert sum(w.label == SWARM for w in in_days) == expected
        swarms = [e for e in labels if e.kind == SWARM]
        for e in swarms:
            assert 20 <= e.end - e.start <= 60
    again = make_benchmark(HiveProfile(), full_scale_scenario(seed=0))
    for hive in bench.traces:
        assert np.array_equal(bench.traces[hive].values, again.traces[hive].values, equal_nan=True)
        assert bench.labels[hive] == again.labels[hive]


def test_split_swarm_windows():
    # a 20..60 minute swarm covers 5..8 windows of length 60 at stride 15
    for total in (5, 8, 13, 24, 40):
        counts = split_swarm_windows(total)
        assert sum(counts) == total and all(5 <= c <= 8 for c in counts)
    assert split_swarm_windows(0) == []
    for total in (1, 4, 9):
        with pytest.raises(ScenarioError):
            split_swarm_windows(total)


def test_scenario_errors():
    with pytest.raises(ScenarioError):
        make_benchmark(scenario=Scenario((HiveScenario("a", normal_days=0, anomalous_days=0),)))
    with pytest.raises(ScenarioError):
        make_benchmark(scenario=Scenario((HiveScenario("a", anomalous_days=1, swarm_windows=200),)))
    with pytest.raises(ScenarioError):
        make_benchmark(scenario=Scenario((HiveScenario("a"), HiveScenario("a"))))
    with pytest.raises(ValueError):
        EventTemplate("swarm", 0, 10)
    with pytest.raises(ValueError):
        EventTemplate("swarm", 0, 30, above=25)
    with pytest.raises(ValueError):
        EventTemplate("flood", 0, 30)
