"""Run configuration read from a YAML (or JSON) file."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import yaml


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SplitSection:
    training_source: str = "bad_schwartau"
    validation_fraction: float = 0.1
    length: int = 60
    train_stride: int = 15
    eval_stride: int = 15
    # stride of the autoencoder's pre-training windows (1 = every time step)
    pretrain_stride: int = 1


@dataclass(frozen=True)
class TunerSection:
    trials: int = 60
    pretrain_trials: int = 60
    workers: int = 1
    max_epochs: int = 200
    patience: int = 5
    batch_size: int = 64
    # per-trial SMO iteration cap for the one-class SVM search
    ocsvm_max_iter: int = 1_000_000


@dataclass(frozen=True)
class SynthSection:
    scenario: str = "full_scale"
    noise_std: float = 0.04
    diurnal_amplitude: float = 0.3


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    detector: str = "ae"
    sensors: tuple[str, ...] = ("T7",)
    data_dir: str = "data"
    traces: Mapping[str, str] = field(default_factory=dict)
    labels: Mapping[str, str] = field(default_factory=dict)
    detector_params: Mapping[str, Mapping[str, Any]] = field(default_factory=dict)
    split: SplitSection = SplitSection()
    tuner: TunerSection = TunerSection()
    synth: SynthSection = SynthSection()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sensors"] = list(self.sensors)
        d["traces"] = dict(self.traces)
        d["labels"] = dict(self.labels)
        d["detector_params"] = {k: dict(v) for k, v in self.detector_params.items()}
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def _section(cls, data: Any, name: str):
    if data is None:
        return cls()
    if not isinstance(data, Mapping):
        raise ConfigError(f"section {name!r} must be a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in {name!r}: {', '.join(unknown)}")
    out = {}
    for k, v in data.items():
        default = getattr(cls(), k)
        if isinstance(default, bool) or default is None:
            out[k] = v
        elif isinstance(default, (int, float)) and not isinstance(v, (int, float)):
            raise ConfigError(f"{name}.{k} must be numeric, got {v!r}")
        else:
            out[k] = type(default)(v)
    return cls(**out)


def from_mapping(data: Mapping[str, Any]) -> RunConfig:
    # a manifest embeds the config it ran with
    if "config" in data and isinstance(data["config"], Mapping) and "format" in data:
        data = data["config"]
    top = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - top)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    kw: dict[str, Any] = {}
    for k in ("seed",):
        if k in data:
            kw[k] = int(data[k])
    for k in ("detector", "data_dir"):
        if k in data:
            kw[k] = str(data[k])
    if "sensors" in data:
        s = data["sensors"]
        kw["sensors"] = tuple(s.split(",")) if isinstance(s, str) else tuple(str(x) for x in s)
    for k in ("traces", "labels", "detector_params"):
        if k in data:
            if not isinstance(data[k], Mapping):
                raise ConfigError(f"{k!r} must be a mapping")
            kw[k] = dict(data[k])
    kw["split"] = _section(SplitSection, data.get("split"), "split")
    kw["tuner"] = _section(TunerSection, data.get("tuner"), "tuner")
    kw["synth"] = _section(SynthSection, data.get("synth"), "synth")
    return RunConfig(**kw)


def load_config(path: str | os.PathLike | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}".replace("\n", " ")) from None
    if not isinstance(data, Mapping):
        raise ConfigError(f"{path} must hold a mapping")
    return from_mapping(data)


def override(cfg: RunConfig, **changes) -> RunConfig:
    """Apply CLI flag overrides; None means 'not given'."""
    top, split, tuner = {}, {}, {}
    for k, v in changes.items():
        if v is None:
            continue
        if k == "stride_min":
            split["eval_stride"] = int(v)
        elif k == "trials":
            tuner["trials"] = int(v)
        elif k == "sensors":
            top["sensors"] = tuple(v.split(",")) if isinstance(v, str) else tuple(v)
        else:
            top[k] = v
    if split:
        top["split"] = replace(cfg.split, **split)
    if tuner:
        top["tuner"] = replace(cfg.tuner, **tuner)
    return replace(cfg, **top)
