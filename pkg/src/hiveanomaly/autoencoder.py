"""Recurrent (GRU) encoder-decoder trained to reconstruct normal windows.

The encoder reads a window step by step; its last top-layer hidden state is the
code.  The decoder is fed the code at every one of the L steps and a linear
readout maps its outputs back to sensor space, in input order.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .core import SWARM, Scaler


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class AeConfig:
    hidden_size: int = 16
    layers: int = 1
    n_sensors: int = 1
    length: int = 60
    lr: float = 1e-3
    patience: int = 5
    max_epochs: int = 200
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self) -> None:
        if self.hidden_size < 2:
            raise ValueError("hidden_size must be >= 2")
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.n_sensors < 1 or self.length < 1:
            raise ValueError("n_sensors and length must be >= 1")


class RecurrentAutoencoder(nn.Module):
    def __init__(self, n_sensors: int, hidden_size: int, layers: int):
        super().__init__()
        self.encoder = nn.GRU(n_sensors, hidden_size, layers, batch_first=True)
        self.decoder = nn.GRU(hidden_size, hidden_size, layers, batch_first=True)
        self.readout = nn.Linear(hidden_size, n_sensors)

    def reset_parameters(self, generator: torch.Generator) -> None:
        # uniform in +-1/sqrt(fan_in); biases share their weight matrix's fan-in
        with torch.no_grad():
            for name, p in self.named_parameters():
                if name.startswith("readout"):
                    fan_in = self.readout.in_features
                else:
                    gru = self.encoder if name.startswith("encoder") else self.decoder
                    layer = int(name.rsplit("_l", 1)[1])
                    fan_in = gru.input_size if ("_ih_" in name and layer == 0) else gru.hidden_size
                bound = 1.0 / math.sqrt(fan_in)
                p.copy_(torch.rand(p.shape, generator=generator, dtype=p.dtype) * 2 * bound - bound)

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        _, h = self.encoder(x)
        return h[-1]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        code = self.encode(x)
        steps = code.unsqueeze(1).expand(-1, x.shape[1], -1)
        out, _ = self.decoder(steps)
        return self.readout(out)


@dataclass(frozen=True)
class AeModel:
    config: AeConfig
    state: dict
    scaler: Scaler | None = None
    alpha: float | None = None
    history: tuple[tuple[int, float, float], ...] = ()
    best_epoch: int = -1
    _net: list = field(default_factory=list, repr=False, compare=False)

    def network(self) -> RecurrentAutoencoder:
        if not self._net:
            net = RecurrentAutoencoder(self.config.n_sensors, self.config.hidden_size, self.config.layers)
            net.load_state_dict({k: torch.from_numpy(np.array(v)) for k, v in self.state.items()})
            net.eval()
            self._net.append(net)
        return self._net[0]


def _as_tensor(windows) -> torch.Tensor:
    if isinstance(windows, torch.Tensor):
        return windows
    if isinstance(windows, np.ndarray):
        arr = windows
    else:
        arr = np.stack([getattr(w, "data", w) for w in windows])
    if arr.ndim == 2:
        arr = arr[None]
    return torch.from_numpy(np.ascontiguousarray(arr, dtype=np.float32))


def _state_to_numpy(net: nn.Module) -> dict:
    return {k: v.detach().cpu().numpy().copy() for k, v in net.state_dict().items()}


def _mean_loss(net, data: torch.Tensor, batch: int) -> float:
    total = 0.0
    with torch.no_grad():
        for b0 in range(0, len(data), batch):
            xb = data[b0:b0 + batch]
            total += float(((net(xb) - xb) ** 2).sum())
    return total / data.numel()


def ae_train(training, validation, config: AeConfig, scaler: Scaler | None = None) -> AeModel:
    """Adam + MSE with early stopping on validation loss; returns the best-validation parameters.

    ``training`` / ``validation`` are scaled windows (Window objects or (N, L, S) arrays).
    """
    train = _as_tensor(training)
    val = _as_tensor(validation)
    if len(train) == 0 or len(val) == 0:
        raise ValueError("training and validation data must be non-empty")
    if train.shape[1:] != (config.length, config.n_sensors):
        raise ValueError(f"windows of shape {tuple(train.shape[1:])} do not match config "
                         f"({config.length}, {config.n_sensors})")
    gen = torch.Generator().manual_seed(int(config.seed))
    net = RecurrentAutoencoder(config.n_sensors, config.hidden_size, config.layers)
    net.reset_parameters(gen)
    opt = torch.optim.Adam(net.parameters(), lr=config.lr)

    best = (math.inf, -1, copy.deepcopy(net.state_dict()))
    history = []
    stale = 0
    for epoch in range(config.max_epochs):
        net.train()
        order = torch.randperm(len(train), generator=gen)
        total = 0.0
        for b0 in range(0, len(train), config.batch_size):
            xb = train[order[b0:b0 + config.batch_size]]
            opt.zero_grad()
            loss = nn.functional.mse_loss(net(xb), xb)
            if not torch.isfinite(loss):
                raise DivergenceError(f"non-finite training loss at epoch {epoch}")
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(xb)
        net.eval()
        val_loss = _mean_loss(net, val, 1024)
        if not math.isfinite(val_loss):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
        history.append((epoch, total / len(train), val_loss))
        if val_loss < best[0]:
            best = (val_loss, epoch, copy.deepcopy(net.state_dict()))
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    net.load_state_dict(best[2])
    return AeModel(config, _state_to_numpy(net), scaler, None, tuple(history), best[1])


def ae_reconstruct(model: AeModel, windows) -> np.ndarray:
    x = _as_tensor(windows)
    if tuple(x.shape[1:]) != (model.config.length, model.config.n_sensors):
        raise ValueError(f"window shape {tuple(x.shape[1:])} does not match model "
                         f"({model.config.length}, {model.config.n_sensors})")
    net = model.network()
    with torch.no_grad():
        out = [net(x[b0:b0 + 1024]) for b0 in range(0, len(x), 1024)]
    return torch.cat(out).numpy().astype(np.float64)


def ae_loss(model: AeModel, windows) -> np.ndarray:
    """Per-window mean squared reconstruction error."""
    x = _as_tensor(windows).numpy().astype(np.float64)
    rec = ae_reconstruct(model, windows)
    return ((rec - x) ** 2).reshape(len(x), -1).mean(axis=1)


@dataclass(frozen=True)
class AlphaCalibration:
    alpha: float
    f1: float
    degenerate: bool


def _f1(pred: np.ndarray, positive: np.ndarray) -> float:
    tp = int(np.sum(pred & positive))
    fp = int(np.sum(pred & ~positive))
    fn = int(np.sum(~pred & positive))
    return 0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn)


def calibrate_threshold(losses, labels: Sequence[str]) -> AlphaCalibration:
    """Scan the observed losses as thresholds (anomaly iff loss >= alpha) for the best swarm F1.

    Ties go to the larger alpha.  When every loss is identical the scan cannot
    discriminate; alpha is placed just above that value so nothing is flagged.
    """
    losses = np.asarray(losses, dtype=np.float64)
    positive = np.asarray(labels) == SWARM
    if not positive.any():
        raise ValueError("holdout has no swarm-labeled windows")
    candidates = np.unique(losses)
    if len(candidates) == 1:
        return AlphaCalibration(float(np.nextafter(candidates[0], np.inf)), 0.0, True)
    best_f1, best_alpha = -1.0, None
    for a in candidates:
        f = _f1(losses >= a, positive)
        if f >= best_f1:
            best_f1, best_alpha = f, float(a)
    return AlphaCalibration(best_alpha, best_f1, False)


def ae_calibrate_alpha(model: AeModel, windows, labels: Sequence[str]) -> AeModel:
    """Set alpha from labeled (scaled) holdout windows; returns a new model."""
    cal = calibrate_threshold(ae_loss(model, windows), labels)
    return replace(model, alpha=cal.alpha, _net=[])


def ae_classify(model: AeModel, windows) -> np.ndarray:
    if model.alpha is None:
        raise ValueError("alpha is not calibrated")
    return ae_loss(model, windows) >= model.alpha
