"""Uniform fit/score/predict surface over the six detectors.

Classical detectors see raw flattened windows; the autoencoder sees scaled
(L, S) windows; the rule-based detector needs no fitting at all.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np

from . import autoencoder as ae
from . import envelope, iforest, lof, ocsvm
from .core import Scaler, Window, fit_scaler, flatten_many, stack
from .rba import RbaConfig, rba_window_verdict

LEARNED = ("ae", "envelope", "iforest", "lof", "ocsvm")
KINDS = LEARNED + ("rba",)
CLASSICAL = ("envelope", "iforest", "lof", "ocsvm")


@dataclass(frozen=True)
class DetectorModel:
    kind: str
    params: Mapping[str, Any]
    model: Any
    length: int
    n_sensors: int
    sensors: tuple[str, ...] = ()
    extra: Mapping[str, Any] = field(default_factory=dict)


def _data(windows) -> np.ndarray:
    if isinstance(windows, np.ndarray):
        return windows if windows.ndim == 3 else windows[None]
    return stack(list(windows))


def fit_detector(kind: str, params: Mapping[str, Any], training: Sequence[Window],
                 validation: Sequence[Window] | None = None, seed: int = 0,
                 scaler: Scaler | None = None, **options) -> DetectorModel:
    """Fit one detector from tuner-style parameter names."""
    if kind not in KINDS:
        raise ValueError(f"unknown detector {kind!r}; expected one of {KINDS}")
    data = _data(training)
    n, L, S = data.shape
    sensors = tuple(training[0].sensors) if not isinstance(training, np.ndarray) and training else ()
    p = dict(params)
    if kind == "rba":
        cfg = RbaConfig(**{k: p[k] for k in ("threshold", "min_duration", "max_duration") if k in p})
        return DetectorModel(kind, p, cfg, L, S, sensors)
    if kind == "ae":
        if validation is None:
            raise ValueError("the autoencoder needs validation windows")
        scaler = scaler or fit_scaler(training)
        val = _data(validation)
        cfg = ae.AeConfig(hidden_size=int(p.get("hidden_size", 16)), layers=int(p.get("layers", 1)),
                          n_sensors=S, length=L, seed=int(seed),
                          **{k: options[k] for k in ("max_epochs", "patience", "batch_size", "lr") if k in options})
        model = ae.ae_train(scaler.transform(data), scaler.transform(val), cfg, scaler)
        return DetectorModel(kind, p, model, L, S, sensors)

    X = flatten_many(data)
    if kind == "lof":
        k = min(int(p.get("n_neighbors", 20)), n - 1)
        model = lof.lof_fit(X, k=k, metric=p.get("metric", "euclidean"), contamination=p.get("contamination"),
                            algorithm=p.get("algorithm", "brute"), leaf_size=int(p.get("leaf_size", 30)))
    elif kind == "envelope":
        model = envelope.mcd_fit(X, assume_centered=bool(p.get("assume_centered", False)),
                                 support_fraction=p.get("support_fraction"),
                                 contamination=p.get("contamination"), seed=seed)
    elif kind == "iforest":
        model = iforest.iforest_fit(X, n_estimators=int(p.get("n_estimators", 100)),
                                    max_samples=p.get("max_samples", "auto"),
                                    max_features=float(p.get("max_features", 1.0)),
                                    bootstrap=bool(p.get("bootstrap", False)),
                                    contamination=p.get("contamination"), seed=seed)
    else:
        kernel_kind = p.get("kernel", "rbf")
        gamma = p.get("gamma")
        if gamma is None:
            var = X.var()
            gamma = 1.0 / (X.shape[1] * var) if var > 0 else 1.0
        spec = ocsvm.KernelSpec(kernel_kind, float(gamma), 3, 0.0)
        model = ocsvm.ocsvm_fit(X, spec, nu=float(p.get("nu", 0.5)), shrinking=bool(p.get("shrinking", True)),
                                seed=seed, max_iter=int(options.get("max_iter", ocsvm.MAX_ITER)))
    return DetectorModel(kind, p, model, L, S, sensors)


def _check_shape(dm: DetectorModel, data: np.ndarray) -> None:
    if data.shape[1:] != (dm.length, dm.n_sensors):
        raise ValueError(f"windows of shape {data.shape[1:]} do not match the {dm.kind} model "
                         f"({dm.length}, {dm.n_sensors})")


def detector_scores(dm: DetectorModel, windows) -> np.ndarray:
    """Anomaly scores, larger meaning more anomalous."""
    data = _data(windows)
    _check_shape(dm, data)
    if dm.kind == "rba":
        return np.array([float(rba_window_verdict(Window(0, d), dm.model)) for d in data])
    if dm.kind == "ae":
        return ae.ae_loss(dm.model, dm.model.scaler.transform(data))
    X = flatten_many(data)
    if dm.kind == "lof":
        return lof.lof_score(dm.model, X)
    if dm.kind == "envelope":
        return envelope.robust_distance(dm.model, X)
    if dm.kind == "iforest":
        return iforest.iforest_score(dm.model, X)
    return -ocsvm.ocsvm_decision(dm.model, X)


def threshold_of(dm: DetectorModel) -> float:
    if dm.kind == "rba":
        return 0.5
    if dm.kind == "ae":
        if dm.model.alpha is None:
            raise ValueError("alpha is not calibrated")
        return dm.model.alpha
    if dm.kind == "envelope":
        return dm.model.cutoff
    if dm.kind == "ocsvm":
        return 0.0
    return dm.model.threshold


def detector_predict(dm: DetectorModel, windows) -> np.ndarray:
    """True marks a predicted swarm/anomaly."""
    s = detector_scores(dm, windows)
    t = threshold_of(dm)
    # the autoencoder rule is inclusive, the others strict
    return s >= t if dm.kind == "ae" else s > t


def calibrate_alpha(dm: DetectorModel, windows: Sequence[Window]) -> DetectorModel:
    if dm.kind != "ae":
        raise ValueError("only the autoencoder has an alpha threshold")
    data = _data(windows)
    _check_shape(dm, data)
    labels = [w.label for w in windows]
    cal = ae.calibrate_threshold(ae.ae_loss(dm.model, dm.model.scaler.transform(data)), labels)
    model = replace(dm.model, alpha=cal.alpha, _net=[])
    extra = {**dm.extra, "alpha_f1": cal.f1, "alpha_degenerate": cal.degenerate}
    return DetectorModel(dm.kind, dm.params, model, dm.length, dm.n_sensors, dm.sensors, extra)
