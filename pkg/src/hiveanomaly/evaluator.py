"""Confusion counts, precision/recall/F1, overall aggregation and sensor correlations."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import ANOMALOUS_DAY, MINUTES_PER_DAY, NORMAL_DAY, SWARM, SensorTrace, day_tags

WEIGHTED = "weighted"
POOLED = "pooled"
NA = None


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float | None  # None is the tables' "NA"


def confusion(predictions: Sequence[bool], labels: Sequence[str], positive: str = SWARM) -> ConfusionCounts:
    """Swarm is the positive class; any other label predicted positive is a false positive."""
    pred = np.asarray(predictions, dtype=bool)
    lab = np.asarray(labels)
    if pred.shape != lab.shape:
        raise ValueError(f"length mismatch: {pred.shape[0] if pred.ndim else 0} predictions, "
                         f"{lab.shape[0] if lab.ndim else 0} labels")
    pos = lab == positive
    return ConfusionCounts(int(np.sum(pred & pos)), int(np.sum(pred & ~pos)),
                           int(np.sum(~pred & pos)), int(np.sum(~pred & ~pos)))


def metrics(counts: ConfusionCounts) -> Metrics:
    tp, fp, fn = counts.tp, counts.fp, counts.fn
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    if tp == 0:
        return Metrics(p, r, NA)
    return Metrics(p, r, 2 * p * r / (p + r))


@dataclass(frozen=True)
class DatasetRow:
    dataset: str
    counts: ConfusionCounts
    metrics: Metrics
    excluded: bool = False


@dataclass(frozen=True)
class EvalReport:
    detector: str
    rows: tuple[DatasetRow, ...]
    overall: DatasetRow
    mode: str
    extra: Mapping = field(default_factory=dict)

    def row(self, dataset: str) -> DatasetRow:
        for r in self.rows:
            if r.dataset == dataset:
                return r
        raise KeyError(dataset)


def aggregate(rows: Sequence[DatasetRow], mode: str = WEIGHTED) -> DatasetRow:
    """Overall row from per-dataset rows, skipping excluded datasets.

    ``weighted``: P, R and F1 averaged with weights equal to each dataset's
    window count (an NA F1 counts as 0).  ``pooled``: counts summed, metrics
    computed once.  Either way the overall counts are the sums.
    """
    used = [r for r in rows if not r.excluded]
    if not used:
        raise ValueError("no datasets to aggregate")
    total = ConfusionCounts()
    for r in used:
        total = total + r.counts
    if mode == POOLED:
        m = metrics(total)
    elif mode == WEIGHTED:
        w = np.array([r.counts.total for r in used], dtype=np.float64)
        if w.sum() == 0:
            raise ValueError("datasets hold no windows")
        w /= w.sum()
        p = float(sum(wi * r.metrics.precision for wi, r in zip(w, used)))
        rc = float(sum(wi * r.metrics.recall for wi, r in zip(w, used)))
        f = float(sum(wi * (r.metrics.f1 or 0.0) for wi, r in zip(w, used)))
        m = Metrics(p, rc, f if total.tp else NA)
    else:
        raise ValueError(f"unknown aggregation mode {mode!r}")
    return DatasetRow("All", total, m)


def evaluate(detector: str, per_dataset: Mapping[str, tuple[Sequence[bool], Sequence[str]]],
             mode: str = WEIGHTED, extra: Mapping | None = None) -> EvalReport:
    """Build a report; datasets without any swarm window cannot yield a true positive and are excluded."""
    rows = []
    for name in sorted(per_dataset):
        pred, lab = per_dataset[name]
        c = confusion(pred, lab)
        rows.append(DatasetRow(name, c, metrics(c), excluded=(c.tp + c.fn == 0)))
    return EvalReport(detector, tuple(rows), aggregate(rows, mode), mode, dict(extra or {}))


def fmt(x: float | None, digits: int = 2) -> str:
    return "NA" if x is None else f"{x:.{digits}f}"


REPORT_COLUMNS = ("detector", "dataset", "P", "R", "F1", "TP", "FP", "TN", "FN", "excluded", "aggregation")


def report_rows(report: EvalReport, digits: int = 2) -> list[list[str]]:
    out = []
    ordered = [r for r in report.rows if not r.excluded] + [report.overall] + [r for r in report.rows if r.excluded]
    for r in ordered:
        c, m = r.counts, r.metrics
        out.append([report.detector, r.dataset, fmt(m.precision, digits), fmt(m.recall, digits), fmt(m.f1, digits),
                    str(c.tp), str(c.fp), str(c.tn), str(c.fn), str(int(r.excluded)),
                    report.mode if r is report.overall else ""])
    return out


def report_csv(reports: Sequence[EvalReport], digits: int = 2) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for rep in reports:
        w.writerows(report_rows(rep, digits))
    return buf.getvalue()


def long_format(reports: Sequence[EvalReport]) -> str:
    """Plot-ready rows: dataset, detector, metric, value (full precision, NA for undefined F1)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("dataset", "detector", "metric", "value"))
    for rep in reports:
        for r in list(rep.rows) + [rep.overall]:
            m, c = r.metrics, r.counts
            for name, v in (("P", m.precision), ("R", m.recall), ("F1", m.f1), ("TP", c.tp), ("FP", c.fp),
                            ("TN", c.tn), ("FN", c.fn)):
                w.writerow((r.dataset, rep.detector, name, "NA" if v is None else repr(v)))
    return buf.getvalue()


def table_text(reports: Sequence[EvalReport], digits: int = 2) -> str:
    """Fixed-width Table-1-style summary."""
    header = ("Classifier", "Hive", "P", "R", "F1", "TP", "FP", "TN", "FN")
    lines = []
    for rep in reports:
        for i, row in enumerate(report_rows(rep, digits)):
            name = rep.detector if i == 0 else ""
            hive = row[1] + (" (excl.)" if row[9] == "1" else "")
            lines.append((name, hive) + tuple(row[2:9]))
    widths = [max(len(str(x)) for x in col) for col in zip(header, *lines)] if lines else [len(h) for h in header]
    fmt_line = lambda cells: "  ".join(str(c).ljust(w) for c, w in zip(cells, widths)).rstrip()
    out = [fmt_line(header), fmt_line(["-" * w for w in widths])]
    out += [fmt_line(l) for l in lines]
    mode = reports[0].mode if reports else WEIGHTED
    out.append(f"overall rows: {mode} aggregation; excluded datasets hold no swarm windows")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# correlation analysis

def pearson_matrix(values: np.ndarray) -> np.ndarray:
    """Pairwise-complete Pearson correlations; NaN where undefined (constant or < 2 samples)."""
    X = np.asarray(values, dtype=np.float64)
    s = X.shape[1]
    out = np.full((s, s), np.nan)
    for i in range(s):
        for j in range(i, s):
            ok = np.isfinite(X[:, i]) & np.isfinite(X[:, j])
            if ok.sum() < 2:
                continue
            a, b = X[ok, i], X[ok, j]
            da, db = a - a.mean(), b - b.mean()
            den = math.sqrt(float(da @ da) * float(db @ db))
            if den == 0:
                continue
            r = max(-1.0, min(1.0, float(da @ db) / den))
            out[i, j] = out[j, i] = r
    for i in range(s):
        ok = np.isfinite(X[:, i])
        if ok.sum() >= 2 and np.ptp(X[ok, i]) > 0:
            out[i, i] = 1.0
    return out


def sensor_correlations(trace: SensorTrace, sensors: Sequence[str], tags) -> dict[str, np.ndarray]:
    """Correlation matrix over normal-tagged days and over anomalous-tagged days.

    ``tags`` is either a day->tag mapping or a list of label events.
    """
    if not isinstance(tags, Mapping):
        tags = day_tags(tags)
    vals = trace.select(sensors).values
    day = (trace.timestamps - trace.timestamps % MINUTES_PER_DAY)
    out = {}
    for name, tag in (("normal", NORMAL_DAY), ("anomalous", ANOMALOUS_DAY)):
        days = [d for d, t in tags.items() if t == tag]
        mask = np.isin(day, days)
        if mask.sum() >= 2:
            out[name] = pearson_matrix(vals[mask])
    return out
