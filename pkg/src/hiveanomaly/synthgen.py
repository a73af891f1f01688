"""Synthetic beehive traces: near-constant brood temperature plus injected events.

Normal behaviour is a core temperature with a small diurnal cycle, slowly
drifting sensor-local components shared between neighbouring sensors, and
white noise, all kept inside core +- 0.95 C.  Events follow the anomaly
taxonomy: swarm (inverted parabola above 35.5 C), opened hive, treatment and
sensor dropout.  Shapes are generator conventions, not measurements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (ANOMALOUS_DAY, MINUTES_PER_DAY, NORMAL_DAY, OTHER_ANOMALY, SWARM, Event, SensorTrace,
                   derive_seed)

SWARM_THRESHOLD = 35.5
# 2019-05-01 00:00 UTC in minutes since the epoch
DEFAULT_START = 25_944_480

TEMPLATE_KINDS = ("swarm", "opened_hive", "treatment", "sensor_dropout")


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class HiveProfile:
    sensors: tuple[str, ...] = ("T6", "T7", "T8")
    weight_sensor: str | None = "W"
    core: float = 34.5
    noise_std: float = 0.04
    diurnal_amplitude: float = 0.3
    # std of the slow sensor-local drift relative to noise_std
    drift_ratio: float = 4.0
    # mixing weight between sensors decays as coupling ** distance along the layout
    coupling: float = 0.6
    envelope: float = 0.95
    start: int = DEFAULT_START
    seed: int = 0

    def __post_init__(self) -> None:
        if not math.isfinite(self.core):
            raise ValueError("core temperature must be finite")
        if not self.sensors:
            raise ValueError("need at least one temperature sensor")
        if self.noise_std < 0 or self.diurnal_amplitude < 0:
            raise ValueError("noise and amplitude must be nonnegative")
        if not 0 <= self.coupling < 1:
            raise ValueError("coupling must lie in [0, 1)")
        if self.start % MINUTES_PER_DAY:
            raise ValueError("start must be day-aligned")

    @property
    def all_sensors(self) -> tuple[str, ...]:
        return self.sensors + ((self.weight_sensor,) if self.weight_sensor else ())

    @property
    def central(self) -> str:
        return self.sensors[len(self.sensors) // 2]


@dataclass(frozen=True)
class EventTemplate:
    """An injectable event.  ``onset`` is an absolute minute, ``duration`` in minutes.

    Swarm: ``above`` is the length of the super-threshold segment; the
    parabola peaks ``amplitude`` above ``base_offset`` + core.
    Opened hive / treatment: ``amplitude`` is the temperature excursion and
    ``weight_change`` the weight step in kg.
    """

    kind: str
    onset: int
    duration: int
    above: int = 10
    amplitude: float = 1.6
    base_offset: float = 0.4
    dip: float = 1.0
    weight_change: float = 0.0
    sensors: tuple[str, ...] = ()
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in TEMPLATE_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.duration < 1:
            raise ValueError("duration must be >= 1")
        if self.kind == "swarm":
            if not 20 <= self.duration <= 60:
                raise ValueError("swarm duration must lie in [20, 60] minutes")
            if not 2 <= self.above <= 20:
                raise ValueError("swarm super-threshold segment must last 2..20 minutes")

    @property
    def end(self) -> int:
        return self.onset + self.duration


def _ar1(rng: np.random.Generator, n: int, phi: float, std: float) -> np.ndarray:
    """Stationary AR(1) with marginal std ``std``."""
    if std == 0:
        return np.zeros(n)
    eps = rng.standard_normal(n) * std * math.sqrt(1 - phi * phi)
    x = np.empty(n)
    x[0] = rng.standard_normal() * std
    for t in range(1, n):
        x[t] = phi * x[t - 1] + eps[t]
    return x


def generate_normal(profile: HiveProfile = HiveProfile(), days: int = 1, source: str = "synthetic",
                    start: int | None = None) -> SensorTrace:
    if days < 1:
        raise ValueError("days must be >= 1")
    start = profile.start if start is None else start
    n = days * MINUTES_PER_DAY
    rng = np.random.default_rng(derive_seed(profile.seed, "normal", source, start))
    ts = np.arange(start, start + n, dtype=np.int64)
    s = len(profile.sensors)

    phase = 2 * math.pi * ((ts % MINUTES_PER_DAY) - 6 * 60) / MINUTES_PER_DAY
    diurnal = profile.diurnal_amplitude * np.sin(phase)
    drift_std = profile.noise_std * profile.drift_ratio
    latent = np.stack([_ar1(rng, n, 0.995, drift_std) for _ in range(s)], axis=1)
    mix = np.array([[profile.coupling ** abs(i - j) for j in range(s)] for i in range(s)])
    mix /= np.sqrt((mix ** 2).sum(axis=1, keepdims=True))
    temps = profile.core + diurnal[:, None] + latent @ mix.T
    temps = temps + rng.standard_normal((n, s)) * profile.noise_std
    lo, hi = profile.core - profile.envelope, profile.core + profile.envelope
    temps = np.round(np.clip(temps, lo, hi), 3)

    cols = [temps]
    if profile.weight_sensor:
        # nectar intake: slow gain with a midday foraging dip
        gain = 0.2 * (ts - start) / MINUTES_PER_DAY
        forage = -0.3 * np.clip(np.sin(phase), 0, None)
        w = 40.0 + gain + forage + rng.standard_normal(n) * profile.noise_std * 0.5
        cols.append(np.round(w, 3)[:, None])
    return SensorTrace(profile.all_sensors, ts, np.hstack(cols), source)


# ---------------------------------------------------------------------------
# event shapes

def swarm_width(above: int, amplitude: float, base: float, core_to_threshold: float) -> float:
    """Half-width W of the parabola whose super-threshold part spans exactly ``above`` samples."""
    rise = core_to_threshold - base
    if not 0 < rise < amplitude:
        raise ValueError("parabola must start below and peak above the threshold")
    return (above / 2.0) / math.sqrt(1.0 - rise / amplitude)


def swarm_layout(template: EventTemplate, core: float = 34.5) -> tuple[int, int, int]:
    """(pre-rise minutes, parabola minutes, post-dip minutes) for a swarm template."""
    pre = 5
    span = int(math.ceil(2 * swarm_width(template.above, template.amplitude, template.base_offset,
                                         SWARM_THRESHOLD - core))) + 1
    post = template.duration - pre - span
    if post < 5:
        raise ValueError(f"swarm of {template.duration} min cannot hold a {template.above}-min super-threshold "
                         f"segment")
    return pre, span, post


def _swarm_curve(template: EventTemplate, core: float, before: float, after: float) -> np.ndarray:
    pre, span, post = swarm_layout(template, core)
    b = core + template.base_offset
    A = template.amplitude
    W = swarm_width(template.above, A, template.base_offset, SWARM_THRESHOLD - core)
    # super-threshold samples are pre + q .. pre + q + above - 1, centred in the parabola span
    q = (span - template.above) // 2
    cs = pre + q + (template.above - 1) / 2.0
    t = np.arange(template.duration, dtype=np.float64)
    y = np.empty(template.duration)
    y[:pre] = before + (b - before) * (t[:pre] + 1) / pre
    u = (t[pre:pre + span] - cs) / W
    y[pre:pre + span] = b + A * np.clip(1 - u * u, 0, None)
    # post: fall to a dip below core, then recover towards the following baseline
    x = (t[pre + span:] - (pre + span) + 1) / post
    trough = core - template.dip
    fall = np.clip(x / 0.35, 0, 1)
    rise = np.clip((x - 0.35) / 0.65, 0, 1)
    y[pre + span:] = np.where(x <= 0.35, b + (trough - b) * np.sin(0.5 * math.pi * fall),
                              trough + (after - trough) * (1 - np.cos(0.5 * math.pi * rise)))
    return y


def _pulse(duration: int, delay: int, tau: float) -> np.ndarray:
    """0 at both ends, peak 1: delayed exponential approach times a recovery taper."""
    t = np.arange(duration, dtype=np.float64)
    x = np.clip(t - delay, 0, None)
    rel = x / max(1.0, duration - delay)
    g = (1 - np.exp(-x / tau)) * (1 - rel) ** 2
    m = g.max()
    return g / m if m > 0 else g


def inject_event(trace: SensorTrace, template: EventTemplate, events: Sequence[Event] = (),
                 core: float = 34.5, envelope: float = 0.95,
                 weight_sensor: str | None = "W") -> tuple[SensorTrace, Event]:
    """Apply ``template`` to ``trace``; returns the new trace and its label record.

    ``events`` are labels already present; an overlap on a shared sensor is rejected.
    """
    if template.onset < trace.start or template.end > trace.end:
        raise ValueError("event does not fit within the trace")
    temps = tuple(s for s in trace.sensor_ids if s != weight_sensor)
    sensors = template.sensors or temps
    for s in sensors:
        trace.index_of([s])
    for e in events:
        if e.kind in (SWARM, OTHER_ANOMALY) and e.overlaps(template.onset, template.end) and e.touches(sensors):
            raise ValueError(f"event at minute {template.onset} overlaps an existing {e.kind} event")

    vals = np.array(trace.values)
    i0 = template.onset - trace.start
    i1 = i0 + template.duration
    rng = np.random.default_rng(derive_seed(template.seed, template.kind, template.onset))
    cols = trace.index_of(sensors)
    w_col = trace.index_of([weight_sensor])[0] if weight_sensor in trace.sensor_ids else None
    hi = core + envelope

    if template.kind == "swarm":
        for c in cols:
            before = vals[i0 - 1, c] if i0 > 0 and np.isfinite(vals[i0 - 1, c]) else core
            after = vals[i1, c] if i1 < len(vals) and np.isfinite(vals[i1, c]) else core
            curve = _swarm_curve(template, core, min(before, hi), min(after, hi))
            noise = np.clip(rng.standard_normal(template.duration) * 0.02, -0.04, 0.04)
            y = curve + noise
            pre, span, _ = swarm_layout(template, core)
            q = (span - template.above) // 2
            inside = np.zeros(template.duration, dtype=bool)
            inside[pre + q:pre + q + template.above] = True
            # keep everything outside the super-threshold segment strictly below it
            y[~inside] = np.minimum(y[~inside], SWARM_THRESHOLD - 0.05)
            y = np.round(y, 3)
            if np.any(y[inside] <= SWARM_THRESHOLD):
                raise ValueError("swarm shape lost its super-threshold margin")
            vals[i0:i1, c] = y
        if w_col is not None:
            drop = template.weight_change or -1.5
            pre, span, _ = swarm_layout(template, core)
            k = i0 + pre + span // 2
            ramp = np.clip((np.arange(i1 - k)) / 3.0, 0, 1)
            vals[k:i1, w_col] += drop * ramp
            vals[i1:, w_col] += drop
        detail = "swarm"
        kind = SWARM
    elif template.kind == "opened_hive":
        depth = template.amplitude if template.amplitude != EventTemplate.amplitude else 2.5
        g = _pulse(template.duration, delay=3, tau=6.0)
        for c in cols:
            vals[i0:i1, c] = np.round(vals[i0:i1, c] - depth * g, 3)
        if w_col is not None:
            drop = template.weight_change or -5.0
            shape = np.ones(template.duration)
            shape[:2] = [0.3, 0.8]
            shape[-3:] = [0.6, 0.3, 0.1]
            vals[i0:i1, w_col] += drop * shape
        kind, detail = OTHER_ANOMALY, "opened_hive"
    elif template.kind == "treatment":
        rise = template.amplitude if template.amplitude != EventTemplate.amplitude else 0.7
        g = _pulse(template.duration, delay=2, tau=8.0)
        for c in cols:
            y = vals[i0:i1, c] + rise * g
            vals[i0:i1, c] = np.round(np.minimum(y, SWARM_THRESHOLD - 0.05), 3)
        if w_col is not None:
            step = template.weight_change or 0.5
            vals[i0 + 1:, w_col] += step
        kind, detail = OTHER_ANOMALY, "treatment"
    else:
        vals[i0:i1, cols] = np.nan
        kind, detail = OTHER_ANOMALY, "sensor_dropout"

    if w_col is not None:
        vals[:, w_col] = np.round(vals[:, w_col], 3)
    event = Event(template.onset, template.end, kind, False, detail, tuple(template.sensors))
    return trace.with_values(vals), event


# ---------------------------------------------------------------------------
# benchmarks

SLOT_START = 120
SLOT_LENGTH = 180
SLOTS_PER_DAY = (MINUTES_PER_DAY - SLOT_START) // SLOT_LENGTH


@dataclass(frozen=True)
class HiveScenario:
    name: str
    normal_days: int = 0
    anomalous_days: int = 1
    swarm_windows: int = 0
    opened_hive: int = 0
    treatment: int = 0
    dropout: int = 0


@dataclass(frozen=True)
class Scenario:
    hives: tuple[HiveScenario, ...]
    window_length: int = 60
    stride: int = 15
    seed: int = 0


def full_scale_scenario(seed: int = 0) -> Scenario:
    """A training hive with a 24-swarm-window holdout and a test hive with 8."""
    return Scenario((
        HiveScenario("bad_schwartau", normal_days=20, anomalous_days=4, swarm_windows=24, opened_hive=1,
                     treatment=1, dropout=1),
        HiveScenario("wurzburg", normal_days=0, anomalous_days=2, swarm_windows=8, treatment=1, dropout=1),
    ), seed=seed)


@dataclass(frozen=True)
class Benchmark:
    traces: dict
    labels: dict
    profile: HiveProfile
    scenario: Scenario
    templates: dict = field(default_factory=dict)


def window_count(onset: int, duration: int, length: int, stride: int, origin: int = 0) -> int:
    """Windows of the stride grid anchored at ``origin`` overlapping [onset, onset + duration)."""
    first = origin + stride * math.floor((onset - length - origin) / stride + 1)
    while first + length <= onset:
        first += stride
    last = origin + stride * math.floor((onset + duration - 1 - origin) / stride)
    return max(0, (last - first) // stride + 1)


def _best_layout(count: int, length: int, stride: int) -> tuple[int, int]:
    """(duration, first-window overlap) yielding ``count`` windows with the largest minimal edge overlap."""
    best = None
    for d in range(20, 61):
        for o1 in range(1, stride + 1):
            onset = length - o1  # first window starts at 0
            if window_count(onset, d, length, stride) != count:
                continue
            last_start = stride * ((onset + d - 1) // stride)
            o2 = onset + d - last_start
            key = (min(o1, o2), d, -abs(o1 - o2))
            if best is None or key > best[0]:
                best = (key, (d, o1))
    if best is None:
        raise ScenarioError(f"no swarm duration in [20, 60] yields {count} windows")
    return best[1]


def split_swarm_windows(total: int, length: int = 60, stride: int = 15) -> list[int]:
    """Per-event window counts summing to ``total`` (each event a feasible swarm)."""
    if total == 0:
        return []
    feasible = [c for c in range(1, 20) if _feasible(c, length, stride)]
    lo, hi = min(feasible), max(feasible)
    for n in range(math.ceil(total / hi), total // lo + 1):
        base, extra = divmod(total, n)
        counts = [base + (i < extra) for i in range(n)]
        if all(c in feasible for c in counts) and (max(counts) < hi or n == math.ceil(total / hi)):
            # prefer events below the maximal count (larger edge overlaps) when possible
            alt = n + 1
            if max(counts) == hi and alt <= total // lo:
                b2, e2 = divmod(total, alt)
                c2 = [b2 + (i < e2) for i in range(alt)]
                if all(c in feasible for c in c2):
                    return c2
            return counts
    raise ScenarioError(f"{total} swarm windows cannot be split into events of {lo}..{hi} windows")


def _feasible(c: int, length: int, stride: int) -> bool:
    try:
        _best_layout(c, length, stride)
        return True
    except ScenarioError:
        return False


def _day_rows(first_day: int, n: int, kind: str) -> list[Event]:
    return [Event(first_day + i * MINUTES_PER_DAY, first_day + (i + 1) * MINUTES_PER_DAY, kind)
            for i in range(n)]


def make_hive(profile: HiveProfile, hive: HiveScenario, length: int = 60, stride: int = 15,
              seed: int = 0) -> tuple[SensorTrace, list[Event], list[EventTemplate]]:
    days = hive.normal_days + hive.anomalous_days
    if days < 1:
        raise ScenarioError(f"hive {hive.name!r} has no days")
    prof = HiveProfile(**{**profile.__dict__, "seed": derive_seed(seed, "hive", hive.name)})
    trace = generate_normal(prof, days, hive.name)
    rng = np.random.default_rng(derive_seed(seed, "events", hive.name))

    counts = split_swarm_windows(hive.swarm_windows, length, stride)
    queue: list[tuple[str, int]] = [("swarm", c) for c in counts]
    queue += [("opened_hive", 0)] * hive.opened_hive + [("treatment", 0)] * hive.treatment
    queue += [("sensor_dropout", 0)] * hive.dropout
    capacity = hive.anomalous_days * SLOTS_PER_DAY
    if len(queue) > capacity:
        raise ScenarioError(f"hive {hive.name!r}: {len(queue)} events exceed {capacity} slots "
                            f"on {hive.anomalous_days} anomalous day(s)")
    if queue and hive.anomalous_days == 0:
        raise ScenarioError(f"hive {hive.name!r}: events need anomalous days")
    # spread events over the anomalous days round-robin so every day carries some
    first_anom = trace.start + hive.normal_days * MINUTES_PER_DAY
    slots = [first_anom + d * MINUTES_PER_DAY + SLOT_START + k * SLOT_LENGTH
             for k in range(SLOTS_PER_DAY) for d in range(hive.anomalous_days)]

    events: list[Event] = []
    templates: list[EventTemplate] = []
    for (kind, c), slot in zip(queue, slots):
        tseed = int(rng.integers(2**31))
        if kind == "swarm":
            d, o1 = _best_layout(c, length, stride)
            onset = slot + stride + length - o1
            max_above = 2
            for a in range(2, 21):
                try:
                    swarm_layout(EventTemplate("swarm", onset, d, above=a), prof.core)
                    max_above = a
                except ValueError:
                    break
            above = int(rng.integers(max(2, max_above // 2), max_above + 1))
            tpl = EventTemplate("swarm", onset, d, above=above, seed=tseed)
        elif kind == "opened_hive":
            tpl = EventTemplate("opened_hive", slot + 30, int(rng.integers(60, 121)), seed=tseed)
        elif kind == "treatment":
            tpl = EventTemplate("treatment", slot + 30, int(rng.integers(40, 91)), seed=tseed)
        else:
            tpl = EventTemplate("sensor_dropout", slot + 30, int(rng.integers(30, 121)), seed=tseed)
        trace, ev = inject_event(trace, tpl, events, prof.core, prof.envelope, prof.weight_sensor)
        events.append(ev)
        templates.append(tpl)

    labels = _day_rows(trace.start, hive.normal_days, NORMAL_DAY)
    labels += _day_rows(first_anom, hive.anomalous_days, ANOMALOUS_DAY)
    labels += sorted(events, key=lambda e: e.start)
    return trace, labels, templates


def make_benchmark(profile: HiveProfile = HiveProfile(), scenario: Scenario | None = None) -> Benchmark:
    scenario = scenario or full_scale_scenario()
    traces, labels, templates = {}, {}, {}
    for hive in scenario.hives:
        if hive.name in traces:
            raise ScenarioError(f"duplicate hive name {hive.name!r}")
        tr, lab, tpl = make_hive(profile, hive, scenario.window_length, scenario.stride, scenario.seed)
        traces[hive.name], labels[hive.name], templates[hive.name] = tr, lab, tpl
    return Benchmark(traces, labels, profile, scenario, templates)
