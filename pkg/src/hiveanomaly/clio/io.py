"""Trace and label CSV files, and per-minute downsampling."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from ..core import LABEL_KINDS, Event, SensorTrace


class FormatError(ValueError):
    pass


def atomic_write(path: str | os.PathLike, data: str | bytes) -> None:
    """Write via a temp file in the same directory and rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": "", "encoding": "utf-8"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_time(minute: int) -> str:
    return datetime.fromtimestamp(int(minute) * 60, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_seconds(text: str) -> int:
    """ISO-8601 timestamp to integer seconds since the epoch (naive times are UTC)."""
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    if dt.microsecond:
        raise ValueError(f"sub-second timestamp {text!r}")
    return int(dt.timestamp())


def parse_minute(text: str) -> int:
    sec = parse_seconds(text)
    if sec % 60:
        raise ValueError(f"timestamp {text!r} is not on a minute boundary")
    return sec // 60


def _cell(text: str) -> float:
    t = text.strip()
    return float("nan") if t == "" else float(t)


def _fmt_value(v: float) -> str:
    return "" if not np.isfinite(v) else repr(float(v))


def read_samples(path: str | os.PathLike) -> tuple[tuple[str, ...], np.ndarray, np.ndarray]:
    """Raw rows of a trace CSV: (sensor ids, timestamps in seconds, values)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = csv.reader(fh)
        try:
            header = next(rows)
        except StopIteration:
            raise FormatError(f"{path}:1: empty file") from None
        if not header or header[0].strip() != "timestamp" or len(header) < 2:
            raise FormatError(f"{path}:1: header must be 'timestamp,<sensor>,...'")
        ids = tuple(h.strip() for h in header[1:])
        if len(set(ids)) != len(ids) or any(not i for i in ids):
            raise FormatError(f"{path}:1: duplicate or empty sensor id in header")
        secs, vals = [], []
        for line_no, row in enumerate(rows, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}")
            try:
                t = parse_seconds(row[0])
                v = [_cell(c) for c in row[1:]]
            except ValueError as exc:
                raise FormatError(f"{path}:{line_no}: {exc}") from None
            if secs and t == secs[-1]:
                raise FormatError(f"{path}:{line_no}: duplicate timestamp {row[0].strip()}")
            if secs and t < secs[-1]:
                raise FormatError(f"{path}:{line_no}: non-monotonic timestamp {row[0].strip()}")
            secs.append(t)
            vals.append(v)
    if not secs:
        raise FormatError(f"{path}: no data rows")
    return ids, np.array(secs, dtype=np.int64), np.array(vals, dtype=np.float64).reshape(len(secs), len(ids))


def ingest(path: str | os.PathLike, source: str | None = None) -> SensorTrace:
    """Minute-resolution trace; gaps between rows become missing values."""
    ids, secs, vals = read_samples(path)
    bad = np.flatnonzero(secs % 60)
    if bad.size:
        raise FormatError(f"{path}:{int(bad[0]) + 2}: timestamp is not on a minute boundary "
                          f"(use downsample_to_minutes for sub-minute data)")
    minutes = secs // 60
    n = int(minutes[-1] - minutes[0]) + 1
    full = np.full((n, len(ids)), np.nan)
    full[minutes - minutes[0]] = vals
    ts = np.arange(minutes[0], minutes[0] + n, dtype=np.int64)
    return SensorTrace(ids, ts, full, Path(path).stem if source is None else source)


def downsample_to_minutes(sensor_ids: Sequence[str], seconds, values, source: str = "") -> SensorTrace:
    """Per-minute mean of the available samples; a minute with none is missing."""
    secs = np.asarray(seconds, dtype=np.int64)
    vals = np.asarray(values, dtype=np.float64)
    if vals.ndim == 1:
        vals = vals[:, None]
    if len(secs) == 0:
        raise ValueError("no samples")
    if len(secs) > 1:
        step = np.diff(secs)
        if np.any(step <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if np.any(step != step[0]):
            raise ValueError("irregular sampling: timestamps are not evenly spaced")
        if step[0] > 60:
            raise ValueError("sampling is coarser than one minute")
    minute = secs // 60
    m0 = int(minute[0])
    n = int(minute[-1]) - m0 + 1
    idx = minute - m0
    total = np.zeros((n, vals.shape[1]))
    count = np.zeros((n, vals.shape[1]))
    ok = np.isfinite(vals)
    np.add.at(total, idx, np.where(ok, vals, 0.0))
    np.add.at(count, idx, ok)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(count > 0, total / np.maximum(count, 1), np.nan)
    return SensorTrace(tuple(sensor_ids), np.arange(m0, m0 + n, dtype=np.int64), mean, source)


def ingest_subminute(path: str | os.PathLike, source: str | None = None) -> SensorTrace:
    ids, secs, vals = read_samples(path)
    return downsample_to_minutes(ids, secs, vals, Path(path).stem if source is None else source)


def trace_csv(trace: SensorTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("timestamp",) + trace.sensor_ids)
    for t, row in zip(trace.timestamps, trace.values):
        w.writerow([format_time(t)] + [_fmt_value(v) for v in row])
    return buf.getvalue()


def write_trace(path: str | os.PathLike, trace: SensorTrace) -> None:
    atomic_write(path, trace_csv(trace))


# ---------------------------------------------------------------------------
# labels

LABEL_HEADER = ("start", "end", "kind", "verified")


def labels_csv(events: Sequence[Event]) -> str:
    """``start,end,kind,verified`` plus an optional ``detail`` column naming the finer event type."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LABEL_HEADER + ("detail",))
    for e in events:
        w.writerow([format_time(e.start), format_time(e.end), e.kind, int(e.verified), e.detail])
    return buf.getvalue()


def write_labels(path: str | os.PathLike, events: Sequence[Event]) -> None:
    atomic_write(path, labels_csv(events))


_TRUE = {"1", "true", "yes", "y", "*"}
_FALSE = {"0", "false", "no", "n", ""}


def read_labels(path: str | os.PathLike) -> list[Event]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = csv.reader(fh)
        try:
            header = [h.strip() for h in next(rows)]
        except StopIteration:
            raise FormatError(f"{path}:1: empty label file") from None
        if tuple(header[:4]) != LABEL_HEADER:
            raise FormatError(f"{path}:1: header must start with {','.join(LABEL_HEADER)}")
        events = []
        for line_no, row in enumerate(rows, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 4 or len(row) > len(header):
                raise FormatError(f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}")
            kind = row[2].strip()
            if kind not in LABEL_KINDS:
                raise FormatError(f"{path}:{line_no}: unknown kind {kind!r}; expected one of {LABEL_KINDS}")
            flag = row[3].strip().lower()
            if flag not in _TRUE | _FALSE:
                raise FormatError(f"{path}:{line_no}: verified flag must be 0/1, got {row[3]!r}")
            try:
                start, end = parse_minute(row[0]), parse_minute(row[1])
                detail = row[4].strip() if len(row) > 4 else ""
                events.append(Event(start, end, kind, flag in _TRUE, detail))
            except ValueError as exc:
                raise FormatError(f"{path}:{line_no}: {exc}") from None
    return events
