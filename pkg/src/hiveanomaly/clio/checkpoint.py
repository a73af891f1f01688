"""Versioned binary checkpoints for fitted detectors.

Byte layout (all integers little-endian)::

    magic     8 bytes  b"HIVECKPT"
    version   u16
    kind      u16 length + UTF-8 detector tag
    sections  repeated until end of file:
                tag      4 ASCII bytes ("HEAD", "CONF" or "ARRS")
                length   u64 payload size
                payload

HEAD and CONF are UTF-8 JSON.  ARRS holds a u32 array count followed by, per
array: u16 name length + name, u16 dtype length + numpy dtype string (always
little-endian), u8 ndim, ndim x u64 shape, u64 byte count, raw C-order bytes.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .. import autoencoder as ae
from ..core import Scaler
from ..detectors import KINDS, DetectorModel
from ..envelope import McdModel
from ..iforest import ForestModel, IsolationTree
from ..lof import LofModel
from ..ocsvm import KernelSpec, OcsvmModel
from ..rba import RbaConfig
from .io import atomic_write

MAGIC = b"HIVECKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<H", len(b)) + b


def _section(tag: bytes, payload: bytes) -> bytes:
    return tag + struct.pack("<Q", len(payload)) + payload


def _pack_arrays(arrays: Mapping[str, np.ndarray]) -> bytes:
    out = [struct.pack("<I", len(arrays))]
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name])
        a = a.astype(a.dtype.newbyteorder("<"), copy=False)
        out.append(_pack_str(name))
        out.append(_pack_str(a.dtype.str))
        out.append(struct.pack("<B", a.ndim))
        out.append(struct.pack(f"<{a.ndim}Q", *a.shape))
        raw = a.tobytes(order="C")
        out.append(struct.pack("<Q", len(raw)) + raw)
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("truncated checkpoint")
        b = self.data[self.pos:self.pos + n]
        self.pos += n
        return b

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<H")
        return self.take(n).decode("utf-8")

    @property
    def done(self) -> bool:
        return self.pos >= len(self.data)


def _unpack_arrays(payload: bytes) -> dict[str, np.ndarray]:
    r = _Reader(payload)
    (count,) = r.unpack("<I")
    out = {}
    for _ in range(count):
        name = r.string()
        dtype = np.dtype(r.string())
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}Q") if ndim else ()
        (nbytes,) = r.unpack("<Q")
        out[name] = np.frombuffer(r.take(nbytes), dtype=dtype).reshape(shape).copy()
    return out


def encode(kind: str, header: Mapping[str, Any], config: Mapping[str, Any],
           arrays: Mapping[str, np.ndarray]) -> bytes:
    head = json.dumps(dict(header), sort_keys=True).encode()
    conf = json.dumps(dict(config), sort_keys=True).encode()
    return b"".join([MAGIC, struct.pack("<H", VERSION), _pack_str(kind),
                     _section(b"HEAD", head), _section(b"CONF", conf), _section(b"ARRS", _pack_arrays(arrays))])


def decode(data: bytes) -> tuple[str, dict, dict, dict]:
    r = _Reader(data)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    kind = r.string()
    sections = {}
    while not r.done:
        tag = r.take(4).decode("ascii")
        (n,) = r.unpack("<Q")
        sections[tag] = r.take(n)
    for tag in ("HEAD", "CONF", "ARRS"):
        if tag not in sections:
            raise CheckpointError(f"checkpoint lacks the {tag} section")
    return (kind, json.loads(sections["HEAD"]), json.loads(sections["CONF"]), _unpack_arrays(sections["ARRS"]))


# ---------------------------------------------------------------------------
# per-detector state

def _model_state(dm: DetectorModel) -> tuple[dict, dict]:
    m = dm.model
    if dm.kind == "rba":
        return {"threshold": m.threshold, "min_duration": m.min_duration, "max_duration": m.max_duration}, {}
    if dm.kind == "lof":
        conf = {"k": m.k, "metric": m.metric, "p": m.p, "threshold": m.threshold, "algorithm": m.algorithm,
                "leaf_size": m.leaf_size, "contamination": m.contamination}
        return conf, {"points": m.points, "k_distance": m.k_distance, "lrd": m.lrd,
                      "training_scores": m.training_scores}
    if dm.kind == "envelope":
        conf = {"h": m.h, "cutoff": m.cutoff, "assume_centered": m.assume_centered,
                "support_fraction": m.support_fraction, "contamination": m.contamination,
                "consistency": m.consistency, "log_det": m.log_det, "reweight": m.reweight}
        return conf, {"location": m.location, "scatter": m.scatter, "raw_scatter": m.raw_scatter,
                      "raw_location": m.raw_location,
                      "support": m.support, "det_history": np.array(m.det_history, dtype=np.float64)}
    if dm.kind == "iforest":
        conf = {"m": m.m, "n_estimators": m.n_estimators, "max_features": m.max_features, "bootstrap": m.bootstrap,
                "threshold": m.threshold, "seed": m.seed, "n_features": m.n_features,
                "contamination": m.contamination, "height_limit": m.height_limit}
        sizes = np.array([t.n_nodes for t in m.trees], dtype=np.int64)
        arrays = {"tree_nodes": sizes}
        for f in ("feature", "split", "left", "right", "size", "depth"):
            arrays[f"tree_{f}"] = np.concatenate([getattr(t, f) for t in m.trees])
        return conf, arrays
    if dm.kind == "ocsvm":
        k = m.kernel
        conf = {"rho": m.rho, "kernel": {"kind": k.kind, "gamma": k.gamma, "degree": k.degree, "coef0": k.coef0},
                "nu": m.nu, "shrinking": m.shrinking, "tol": m.tol, "n_train": m.n_train, "n_iter": m.n_iter,
                "objective": m.objective}
        return conf, {"support_vectors": m.support_vectors, "dual_coef": m.dual_coef,
                      "support_index": m.support_index}
    # autoencoder
    conf = {"config": dict(m.config.__dict__), "alpha": m.alpha, "best_epoch": m.best_epoch}
    arrays = {f"param:{k}": v for k, v in m.state.items()}
    arrays["history"] = np.array(m.history, dtype=np.float64).reshape(-1, 3)
    if m.scaler is not None:
        arrays["scaler_mean"], arrays["scaler_std"] = m.scaler.mean, m.scaler.std
    return conf, arrays


def _model_from_state(kind: str, conf: dict, arrays: dict):
    if kind == "rba":
        return RbaConfig(**conf)
    if kind == "lof":
        return LofModel(arrays["points"], conf["k"], conf["metric"], conf["p"], conf["threshold"],
                        conf["algorithm"], conf["leaf_size"], conf["contamination"], arrays["k_distance"],
                        arrays["lrd"], arrays["training_scores"])
    if kind == "envelope":
        return McdModel(arrays["location"], arrays["scatter"], arrays["raw_scatter"], arrays["support"], conf["h"],
                        conf["cutoff"], conf["assume_centered"], conf["support_fraction"], conf["contamination"],
                        conf["consistency"], conf["log_det"], tuple(arrays["det_history"].tolist()),
                        raw_location=arrays["raw_location"], reweight=conf["reweight"])
    if kind == "iforest":
        trees, offset = [], 0
        for n in arrays["tree_nodes"].tolist():
            sl = slice(offset, offset + n)
            trees.append(IsolationTree(*(arrays[f"tree_{f}"][sl].copy()
                                         for f in ("feature", "split", "left", "right", "size", "depth")),
                                       conf["height_limit"]))
            offset += n
        return ForestModel(tuple(trees), conf["m"], conf["n_estimators"], conf["max_features"], conf["bootstrap"],
                           conf["threshold"], conf["seed"], conf["n_features"], conf["contamination"])
    if kind == "ocsvm":
        k = conf["kernel"]
        return OcsvmModel(arrays["support_vectors"], arrays["dual_coef"], conf["rho"],
                          KernelSpec(k["kind"], k["gamma"], k["degree"], k["coef0"]), conf["nu"], conf["shrinking"],
                          conf["tol"], conf["n_train"], conf["n_iter"], conf["objective"], arrays["support_index"])
    cfg = ae.AeConfig(**conf["config"])
    state = {k[len("param:"):]: v for k, v in arrays.items() if k.startswith("param:")}
    scaler = Scaler(arrays["scaler_mean"], arrays["scaler_std"]) if "scaler_mean" in arrays else None
    history = tuple((int(e), float(a), float(b)) for e, a, b in arrays["history"].tolist())
    return ae.AeModel(cfg, state, scaler, conf["alpha"], history, conf["best_epoch"])


def dumps(dm: DetectorModel, header: Mapping[str, Any] | None = None) -> bytes:
    conf, arrays = _model_state(dm)
    wrapper = {"params": dict(dm.params), "length": dm.length, "n_sensors": dm.n_sensors,
               "sensors": list(dm.sensors), "extra": dict(dm.extra), "model": conf}
    head = {"format": "hiveanomaly-checkpoint", "detector": dm.kind, **(header or {})}
    return encode(dm.kind, head, wrapper, arrays)


def loads(data: bytes, expect_kind: str | None = None) -> tuple[DetectorModel, dict]:
    kind, head, conf, arrays = decode(data)
    if kind not in KINDS:
        raise CheckpointError(f"unknown detector kind {kind!r} in checkpoint")
    if expect_kind is not None and kind != expect_kind:
        raise CheckpointError(f"checkpoint holds a {kind!r} model, not {expect_kind!r}")
    model = _model_from_state(kind, conf["model"], arrays)
    dm = DetectorModel(kind, conf["params"], model, conf["length"], conf["n_sensors"], tuple(conf["sensors"]),
                       conf.get("extra", {}))
    return dm, head


def save(path: str | os.PathLike, dm: DetectorModel, header: Mapping[str, Any] | None = None) -> None:
    atomic_write(path, dumps(dm, header))


def load(path: str | os.PathLike, expect_kind: str | None = None) -> tuple[DetectorModel, dict]:
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError:
        raise CheckpointError(f"no checkpoint at {path}") from None
    return loads(data, expect_kind)
