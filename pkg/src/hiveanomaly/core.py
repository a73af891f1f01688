"""Data model, windowing, scaling and the train/validation/holdout/test split."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

MINUTES_PER_DAY = 1440

NORMAL = "normal"
SWARM = "swarm"
OTHER_ANOMALY = "other_anomaly"
UNLABELED = "unlabeled"
WINDOW_LABELS = (NORMAL, SWARM, OTHER_ANOMALY, UNLABELED)

NORMAL_DAY = "normal_day"
ANOMALOUS_DAY = "anomalous_day"
EVENT_KINDS = (SWARM, OTHER_ANOMALY)
LABEL_KINDS = (SWARM, OTHER_ANOMALY, NORMAL_DAY, ANOMALOUS_DAY)


class SplitError(ValueError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def derive_seed(seed: int, *names: object) -> int:
    """Fan a top-level seed out to a named component (stable across runs and platforms)."""
    h = hashlib.sha256(str(int(seed)).encode())
    for name in names:
        h.update(b"\x00" + str(name).encode())
    return int.from_bytes(h.digest()[:8], "little") >> 1


@dataclass(frozen=True)
class SensorTrace:
    """Minute-resolution multi-sensor record; NaN marks a missing reading.

    ``values`` is a (T, S) array whose columns follow ``sensor_ids``.
    """

    sensor_ids: tuple[str, ...]
    timestamps: np.ndarray
    values: np.ndarray
    source: str = ""

    def __post_init__(self) -> None:
        ts = np.asarray(self.timestamps, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim == 1:
            vals = vals[:, None]
        ids = tuple(str(s) for s in self.sensor_ids)
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate sensor ids")
        if vals.shape != (len(ts), len(ids)):
            raise ValueError(f"values shape {vals.shape} does not match ({len(ts)}, {len(ids)})")
        if len(ts) > 1 and np.any(np.diff(ts) != 1):
            raise ValueError("timestamps must be strictly increasing with 1-minute spacing")
        object.__setattr__(self, "sensor_ids", ids)
        object.__setattr__(self, "timestamps", _frozen(ts))
        object.__setattr__(self, "values", _frozen(vals))

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def start(self) -> int:
        return int(self.timestamps[0])

    @property
    def end(self) -> int:
        """One past the last minute."""
        return int(self.timestamps[-1]) + 1

    def column(self, sensor: str) -> np.ndarray:
        return self.values[:, self.index_of([sensor])[0]]

    def index_of(self, sensors: Iterable[str]) -> list[int]:
        idx = []
        for s in sensors:
            try:
                idx.append(self.sensor_ids.index(s))
            except ValueError:
                raise KeyError(f"unknown sensor id {s!r}; trace has {list(self.sensor_ids)}") from None
        return idx

    def select(self, sensors: Sequence[str]) -> "SensorTrace":
        return SensorTrace(tuple(sensors), self.timestamps, self.values[:, self.index_of(sensors)], self.source)

    def slice_minutes(self, start: int, end: int) -> "SensorTrace":
        """Sub-trace covering [start, end) in absolute minutes."""
        i0 = max(0, start - self.start)
        i1 = min(len(self), end - self.start)
        if i1 <= i0:
            raise ValueError(f"empty slice [{start}, {end}) of trace {self.source!r}")
        return SensorTrace(self.sensor_ids, self.timestamps[i0:i1], self.values[i0:i1], self.source)

    def with_values(self, values: np.ndarray) -> "SensorTrace":
        return SensorTrace(self.sensor_ids, self.timestamps, values, self.source)


@dataclass(frozen=True)
class Event:
    """Labeled minute range ``[start, end)``.

    ``kind`` is one of the label-file kinds; ``detail`` keeps the generator's
    finer category (e.g. ``opened_hive``) and ``sensors`` the affected sensors
    (empty means all of them).
    """

    start: int
    end: int
    kind: str
    verified: bool = False
    detail: str = ""
    sensors: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in LABEL_KINDS:
            raise ValueError(f"unknown label kind {self.kind!r}")
        if self.end <= self.start:
            raise ValueError(f"empty event range [{self.start}, {self.end})")

    def overlaps(self, start: int, end: int) -> bool:
        return self.start < end and start < self.end

    def touches(self, sensors: Iterable[str]) -> bool:
        return not self.sensors or bool(set(self.sensors) & set(sensors))


@dataclass(frozen=True)
class Window:
    start: int
    data: np.ndarray
    label: str = UNLABELED
    sensors: tuple[str, ...] = ()
    source: str = ""

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 1:
            data = data[:, None]
        if self.label not in WINDOW_LABELS:
            raise ValueError(f"unknown window label {self.label!r}")
        if self.sensors and len(self.sensors) != data.shape[1]:
            raise ValueError("sensor list does not match data columns")
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "sensors", tuple(self.sensors))

    @property
    def length(self) -> int:
        return self.data.shape[0]

    @property
    def n_sensors(self) -> int:
        return self.data.shape[1]

    @property
    def is_complete(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))


def label_for_range(start: int, end: int, events: Sequence[Event] | None) -> str:
    """Swarm wins over other anomalies; a single minute of overlap is enough."""
    if events is None:
        return UNLABELED
    kinds = {e.kind for e in events if e.kind in EVENT_KINDS and e.overlaps(start, end)}
    if SWARM in kinds:
        return SWARM
    if OTHER_ANOMALY in kinds:
        return OTHER_ANOMALY
    return NORMAL


def scan_windows(trace: SensorTrace, sensors: Sequence[str], length: int = 60, stride: int = 15,
                 events: Sequence[Event] | None = None) -> tuple[list[Window], list[int]]:
    """Like :func:`make_windows` but also returns the starts of windows dropped for missing values."""
    if length < 1 or stride < 1:
        raise ValueError("length and stride must be >= 1")
    cols = trace.index_of(sensors)
    if length > len(trace):
        raise ValueError(f"window length {length} exceeds trace duration {len(trace)}")
    vals = trace.values[:, cols]
    finite = np.all(np.isfinite(vals), axis=1)
    # prefix count of incomplete rows to test each window in O(1)
    bad = np.concatenate([[0], np.cumsum(~finite)])
    windows, excluded = [], []
    for i in range(0, len(trace) - length + 1, stride):
        start = int(trace.timestamps[i])
        if bad[i + length] - bad[i]:
            excluded.append(start)
            continue
        label = label_for_range(start, start + length, events)
        windows.append(Window(start, vals[i:i + length], label, tuple(sensors), trace.source))
    return windows, excluded


def make_windows(trace: SensorTrace, sensors: Sequence[str], length: int = 60, stride: int = 15,
                 events: Sequence[Event] | None = None) -> list[Window]:
    return scan_windows(trace, sensors, length, stride, events)[0]


def stack(windows: Sequence[Window]) -> np.ndarray:
    """(N, L, S) array of window data."""
    if not windows:
        raise ValueError("no windows")
    return np.stack([w.data for w in windows])


def labels_of(windows: Sequence[Window]) -> np.ndarray:
    return np.array([w.label for w in windows])


# ---------------------------------------------------------------------------
# scaling

@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=np.float64).ravel()
        std = np.asarray(self.std, dtype=np.float64).ravel()
        if mean.shape != std.shape:
            raise ValueError("mean/std shape mismatch")
        if np.any(~(std > 0)):
            raise ValueError("scaler standard deviation must be > 0 for every sensor")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "std", _frozen(std))

    def transform(self, data: np.ndarray) -> np.ndarray:
        return (np.asarray(data, dtype=np.float64) - self.mean) / self.std

    def inverse(self, data: np.ndarray) -> np.ndarray:
        return np.asarray(data, dtype=np.float64) * self.std + self.mean


def fit_scaler(training: Sequence[Window]) -> Scaler:
    data = stack(training)
    flat = data.reshape(-1, data.shape[-1])
    std = flat.std(axis=0)
    zero = np.flatnonzero(~(std > 0))
    if zero.size:
        raise ValueError(f"zero-variance sensor column(s) {zero.tolist()} in training windows")
    return Scaler(flat.mean(axis=0), std)


def apply_scaler(scaler: Scaler, window: Window) -> Window:
    return Window(window.start, scaler.transform(window.data), window.label, window.sensors, window.source)


def invert_scaler(scaler: Scaler, window: Window) -> Window:
    return Window(window.start, scaler.inverse(window.data), window.label, window.sensors, window.source)


# ---------------------------------------------------------------------------
# flattening

def flatten(window: Window | np.ndarray) -> np.ndarray:
    """Sensor-major concatenation: all of sensor 1, then sensor 2, ..."""
    data = window.data if isinstance(window, Window) else np.asarray(window)
    if data.ndim == 1:
        return data.copy()
    return data.T.reshape(-1).copy()


def flatten_many(windows: Sequence[Window] | np.ndarray) -> np.ndarray:
    data = stack(windows) if not isinstance(windows, np.ndarray) else windows
    if data.ndim == 2:
        return data.copy()
    return np.ascontiguousarray(data.transpose(0, 2, 1).reshape(len(data), -1))


def unflatten(vector: np.ndarray, length: int, n_sensors: int) -> np.ndarray:
    vector = np.asarray(vector)
    if vector.size != length * n_sensors:
        raise ValueError(f"vector of size {vector.size} cannot hold {length}x{n_sensors}")
    return vector.reshape(n_sensors, length).T.copy()


# ---------------------------------------------------------------------------
# thresholds shared by the classical detectors

def contamination_threshold(scores: np.ndarray, contamination: float) -> float:
    """Score cutoff such that exactly floor(c*n) scores lie strictly above it (barring ties)."""
    s = np.sort(np.asarray(scores, dtype=np.float64))
    n = len(s)
    if n == 0:
        raise ValueError("no scores")
    if not 0.0 <= contamination < 1.0:
        raise ValueError("contamination must lie in [0, 1)")
    k = int(math.floor(contamination * n + 1e-9))
    return float(s[n - k - 1])


# ---------------------------------------------------------------------------
# splits

@dataclass(frozen=True)
class DaySplit:
    """Day ranges (absolute minute starts) per split role."""

    training_source: str
    training: tuple[int, ...]
    validation: tuple[int, ...]
    holdout: tuple[int, ...]
    tests: Mapping[str, tuple[int, ...]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "training_source": self.training_source,
            "training": list(self.training),
            "validation": list(self.validation),
            "holdout": list(self.holdout),
            "tests": {k: list(v) for k, v in sorted(self.tests.items())},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DaySplit":
        return cls(d["training_source"], tuple(d["training"]), tuple(d["validation"]),
                   tuple(d["holdout"]), {k: tuple(v) for k, v in d.get("tests", {}).items()})


@dataclass(frozen=True)
class SplitConfig:
    training_source: str
    validation_fraction: float = 0.1
    sensors: tuple[str, ...] = ()
    length: int = 60
    train_stride: int = 15
    eval_stride: int = 15


@dataclass(frozen=True)
class SplitPlan:
    days: DaySplit
    training: list[Window]
    validation: list[Window]
    holdout: list[Window]
    tests: dict[str, list[Window]]
    excluded: dict[str, int]


def day_tags(events: Sequence[Event]) -> dict[int, str]:
    """Map day start -> 'normal_day' / 'anomalous_day' from day-tag label rows."""
    tags: dict[int, str] = {}
    for e in events:
        if e.kind not in (NORMAL_DAY, ANOMALOUS_DAY):
            continue
        first = e.start - e.start % MINUTES_PER_DAY
        for day in range(first, e.end, MINUTES_PER_DAY):
            if day in tags:
                raise SplitError(f"overlapping day tags at minute {day}")
            tags[day] = e.kind
    return tags


def plan_days(labels: Mapping[str, Sequence[Event]], training_source: str,
              validation_fraction: float = 0.1) -> DaySplit:
    if training_source not in labels:
        raise SplitError(f"training source {training_source!r} not among {sorted(labels)}")
    tags = day_tags(labels[training_source])
    normal = sorted(d for d, k in tags.items() if k == NORMAL_DAY)
    anomalous = sorted(d for d, k in tags.items() if k == ANOMALOUS_DAY)
    if not normal:
        raise SplitError("no normal days available")
    if not anomalous:
        raise SplitError("no holdout: training source has no anomalous days")
    n_val = max(1, int(round(validation_fraction * len(normal))))
    if n_val >= len(normal):
        raise SplitError(f"{len(normal)} normal day(s) cannot fill both training and validation")
    tests = {}
    for src in sorted(labels):
        if src == training_source:
            continue
        days = sorted(d for d, k in day_tags(labels[src]).items() if k == ANOMALOUS_DAY)
        if days:
            tests[src] = tuple(days)
    # chronological: the last normal days validate
    return DaySplit(training_source, tuple(normal[:-n_val]), tuple(normal[-n_val:]), tuple(anomalous), tests)


def contiguous_blocks(days: Sequence[int]) -> list[tuple[int, int]]:
    """Merge day starts into maximal [start, end) minute ranges."""
    blocks: list[list[int]] = []
    for d in sorted(days):
        if blocks and blocks[-1][1] == d:
            blocks[-1][1] = d + MINUTES_PER_DAY
        else:
            blocks.append([d, d + MINUTES_PER_DAY])
    return [(a, b) for a, b in blocks]


def windows_for_days(trace: SensorTrace, days: Sequence[int], sensors: Sequence[str], length: int,
                     stride: int, events: Sequence[Event] | None) -> tuple[list[Window], int]:
    out: list[Window] = []
    n_excluded = 0
    for a, b in contiguous_blocks(days):
        sub = trace.slice_minutes(a, b)
        if len(sub) < length:
            continue
        w, ex = scan_windows(sub, sensors, length, stride, events)
        out.extend(w)
        n_excluded += len(ex)
    return out, n_excluded


def build_split(traces: Mapping[str, SensorTrace], labels: Mapping[str, Sequence[Event]],
                config: SplitConfig, days: DaySplit | None = None) -> SplitPlan:
    if days is None:
        days = plan_days(labels, config.training_source, config.validation_fraction)
    src = days.training_source
    trace = traces[src]
    sensors = config.sensors or trace.sensor_ids
    ev = list(labels.get(src, ()))
    excluded = {}
    training, excluded["training"] = windows_for_days(trace, days.training, sensors, config.length,
                                                      config.train_stride, ev)
    validation, excluded["validation"] = windows_for_days(trace, days.validation, sensors, config.length,
                                                          config.train_stride, ev)
    holdout, excluded["holdout"] = windows_for_days(trace, days.holdout, sensors, config.length,
                                                    config.eval_stride, ev)
    # normal days can still hold a stray event label; keep only normal windows for fitting
    training = [w for w in training if w.label == NORMAL]
    validation = [w for w in validation if w.label == NORMAL]
    if not training or not validation:
        raise SplitError("no complete normal windows for training/validation")
    tests = {}
    for name, tdays in days.tests.items():
        tests[name], excluded[f"test:{name}"] = windows_for_days(
            traces[name], tdays, sensors, config.length, config.eval_stride, list(labels.get(name, ())))
    return SplitPlan(days, training, validation, holdout, tests, excluded)
