"""Rule-based swarm detector: temperature above a threshold for a bounded run of minutes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import SensorTrace, Window


@dataclass(frozen=True)
class RbaConfig:
    threshold: float = 35.5
    min_duration: int = 2
    max_duration: int = 20

    def __post_init__(self) -> None:
        if not math.isfinite(self.threshold):
            raise ValueError("threshold must be finite")
        if not 0 < self.min_duration <= self.max_duration:
            raise ValueError("need 0 < min_duration <= max_duration")


def _runs(above: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of True as inclusive (first, last) index pairs."""
    padded = np.concatenate([[False], above, [False]]).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    return [(int(a), int(b) - 1) for a, b in zip(edges[::2], edges[1::2])]


def rba_detect(values: Sequence[float] | np.ndarray, config: RbaConfig = RbaConfig()) -> list[tuple[int, int]]:
    """Swarm intervals as inclusive sample-index pairs.

    A run counts when every sample is strictly above the threshold and its
    length lies in [min_duration, max_duration].  Runs touching either end of
    the sequence are dropped because their true duration is unknown.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("empty input")
    with np.errstate(invalid="ignore"):
        above = x > config.threshold
    out = []
    for first, last in _runs(above):
        if first == 0 or last == x.size - 1:
            continue
        if config.min_duration <= last - first + 1 <= config.max_duration:
            out.append((first, last))
    return out


def rba_window_verdict(window: Window, config: RbaConfig = RbaConfig()) -> bool:
    """A window is a swarm when any of its sensors shows a qualifying run."""
    return any(rba_detect(window.data[:, j], config) for j in range(window.n_sensors))


def vet_training_data(trace: SensorTrace, config: RbaConfig = RbaConfig(),
                      sensors: Sequence[str] | None = None) -> dict[str, list[tuple[int, int]]]:
    """Swarm-like runs per sensor, as inclusive absolute-minute ranges.

    Only sensors with at least one run appear; an empty dict means the data is clean.
    """
    report = {}
    for s in sensors or trace.sensor_ids:
        found = [(int(trace.timestamps[a]), int(trace.timestamps[b]))
                 for a, b in rba_detect(trace.column(s), config)]
        if found:
            report[s] = found
    return report
