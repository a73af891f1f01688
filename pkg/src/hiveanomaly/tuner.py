"""Random search over per-detector hyperparameter spaces."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .core import SplitPlan
from .evaluator import ConfusionCounts, confusion, metrics

DEFAULT_TRIALS = 60


@dataclass(frozen=True)
class Uniform:
    """Uniform on [low, high); ``Uniform(x)`` is [0, x)."""

    high: float
    low: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.low) and math.isfinite(self.high)) or self.low > self.high:
            raise ValueError("need finite bounds with low <= high")

    def draw(self, rng: np.random.Generator) -> float:
        return float(self.low + (self.high - self.low) * rng.random())

    def contains(self, v) -> bool:
        return self.low <= v < self.high or (self.low == self.high == v)


@dataclass(frozen=True)
class IntUniform:
    """Integers in [low, high], both inclusive."""

    low: int
    high: int

    def __post_init__(self) -> None:
        if self.low > self.high:
            raise ValueError("need low <= high")

    def draw(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.low, self.high + 1))

    def contains(self, v) -> bool:
        return isinstance(v, (int, np.integer)) and self.low <= v <= self.high


@dataclass(frozen=True)
class LogUniform:
    low: float
    high: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.low) and math.isfinite(self.high)):
            raise ValueError("bounds must be finite")
        if not 0 < self.low <= self.high:
            raise ValueError("log-uniform needs 0 < low <= high")

    def draw(self, rng: np.random.Generator) -> float:
        lo, hi = math.log(self.low), math.log(self.high)
        return float(min(self.high, max(self.low, math.exp(lo + (hi - lo) * rng.random()))))

    def contains(self, v) -> bool:
        return self.low <= v <= self.high


@dataclass(frozen=True)
class Categorical:
    choices: tuple

    def __post_init__(self) -> None:
        if not self.choices:
            raise ValueError("categorical needs at least one choice")

    def draw(self, rng: np.random.Generator):
        v = self.choices[int(rng.integers(len(self.choices)))]
        return v.item() if isinstance(v, np.generic) else v

    def contains(self, v) -> bool:
        return v in self.choices


ParamDistribution = Uniform | IntUniform | LogUniform | Categorical

SPACES: dict[str, dict[str, ParamDistribution]] = {
    "lof": {
        "n_neighbors": IntUniform(1, 100),
        "algorithm": Categorical(("ball_tree", "kd_tree")),
        "leaf_size": IntUniform(1, 150),
        "contamination": Uniform(0.5),
        "metric": Categorical(("chebyshev", "cityblock", "euclidean", "infinity", "l1", "l2", "manhattan",
                               "minkowski")),
    },
    "envelope": {
        "assume_centered": Categorical((True, False)),
        "support_fraction": Uniform(1.0),
        "contamination": Uniform(0.5),
    },
    "iforest": {
        "n_estimators": IntUniform(10, 100),
        "max_samples": Categorical(("auto",)),
        "contamination": Uniform(0.5),
        "max_features": Uniform(1.0),
        # listed with the one-class SVM in the published table; only the forest accepts it
        "bootstrap": Categorical((True, False)),
    },
    "ocsvm": {
        "kernel": Categorical(("linear", "poly", "rbf", "sigmoid")),
        "shrinking": Categorical((True, False)),
        "gamma": LogUniform(1e-4, 1.0),
        # listed with the autoencoder in the published table; only the SVM accepts it
        "nu": LogUniform(1e-4, 1.0),
    },
    "ae": {
        "hidden_size": IntUniform(2, 64),
        "layers": IntUniform(1, 4),
    },
}


def trial_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def sample(space: Mapping[str, ParamDistribution], rng: np.random.Generator) -> dict[str, Any]:
    """One draw per parameter, in sorted name order so the stream is stable."""
    return {name: space[name].draw(rng) for name in sorted(space)}


@dataclass(frozen=True)
class TrialResult:
    index: int
    params: Mapping[str, Any]
    objective: float | None
    counts: ConfusionCounts | None
    seed: int
    wall_time: float = 0.0
    failed: bool = False
    error: str = ""
    extra: Mapping[str, Any] = field(default_factory=dict)

    @property
    def rank_key(self) -> float:
        if self.failed:
            return -math.inf
        # NA ranks below every real score
        return -1.0 if self.objective is None else self.objective


def best_trial(trials: Sequence[TrialResult], maximize: bool = True) -> TrialResult:
    """Highest objective (or lowest when ``maximize`` is false); ties go to the lower index."""
    if not trials:
        raise ValueError("zero trials")
    if maximize:
        return max(trials, key=lambda t: (t.rank_key, -t.index))
    ok = [t for t in trials if not t.failed and t.objective is not None]
    if not ok:
        return trials[0]
    return min(ok, key=lambda t: (t.objective, t.index))


def _run_trials(n_trials: int, seed: int, space, evaluate: Callable, workers: int) -> list[TrialResult]:
    if n_trials < 1:
        raise ValueError("zero trials")

    def one(i: int) -> TrialResult:
        params = sample(space, trial_rng(seed, i))
        t0 = time.perf_counter()
        trial_seed = int(np.random.SeedSequence([int(seed), int(i), 1]).generate_state(1)[0] >> 1)
        try:
            objective, counts, extra = evaluate(params, trial_seed)
            return TrialResult(i, params, objective, counts, trial_seed, time.perf_counter() - t0,
                               extra=extra or {})
        except Exception as exc:  # a failed fit is recorded and the search goes on
            msg = f"{type(exc).__name__}: {exc}".replace("\n", " ")
            return TrialResult(i, params, None, None, trial_seed, time.perf_counter() - t0, True, msg)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(one, range(n_trials)))
    return [one(i) for i in range(n_trials)]


def random_search(kind: str, space: Mapping[str, ParamDistribution] | None, split: SplitPlan,
                  n_trials: int = DEFAULT_TRIALS, seed: int = 0, workers: int = 1,
                  fit_options: Mapping[str, Any] | None = None,
                  evaluate: Callable | None = None) -> tuple[TrialResult, list[TrialResult]]:
    """Maximise swarm F1 on the holdout windows; returns (best trial, full log).

    ``evaluate(params, seed) -> (objective, counts, extra)`` replaces the
    default fit-and-score step when given.
    """
    from .detectors import detector_predict, fit_detector

    space = SPACES[kind] if space is None else space
    labels = [w.label for w in split.holdout]
    if evaluate is None:
        if "swarm" not in labels:
            raise ValueError("holdout has no swarm windows")
        opts = dict(fit_options or {})

        def evaluate(params, trial_seed):
            dm = fit_detector(kind, params, split.training, split.validation, seed=trial_seed, **opts)
            c = confusion(detector_predict(dm, split.holdout), labels)
            return metrics(c).f1, c, {}

    trials = _run_trials(n_trials, seed, space, evaluate, workers)
    return best_trial(trials), trials


def pretrain_search(split: SplitPlan, n_trials: int = DEFAULT_TRIALS, seed: int = 0,
                    space: Mapping[str, ParamDistribution] | None = None, training=None, validation=None,
                    fit_options: Mapping[str, Any] | None = None) -> tuple[TrialResult, list[TrialResult], dict]:
    """Autoencoder architecture search minimising validation reconstruction loss.

    Returns (best trial, log, {index: fitted DetectorModel}) so the winner need not be retrained.
    """
    from .detectors import fit_detector

    space = SPACES["ae"] if space is None else space
    training = split.training if training is None else training
    validation = split.validation if validation is None else validation
    opts = dict(fit_options or {})
    models: dict[int, Any] = {}

    def evaluate(params, trial_seed):
        dm = fit_detector("ae", params, training, validation, seed=trial_seed, **opts)
        _, _, val_loss = dm.model.history[dm.model.best_epoch]
        models[trial_seed] = dm
        return float(val_loss), None, {"best_epoch": dm.model.best_epoch}

    trials = _run_trials(n_trials, seed, space, evaluate, 1)
    best = best_trial(trials, maximize=False)
    return best, trials, {t.index: models[t.seed] for t in trials if t.seed in models}


# ---------------------------------------------------------------------------
# trial log

def _fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def trial_log_csv(trials: Sequence[TrialResult], kind: str, n_trials: int | None = None, seed: int | None = None,
                  objective: str = "f1") -> str:
    """One row per trial.  Wall time is left out so logs stay byte-identical across runs."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = sorted({k for t in trials for k in t.params})
    w.writerow(["# detector", kind, "n_trials", n_trials if n_trials is not None else len(trials),
                "seed", "" if seed is None else seed, "objective", objective])
    w.writerow(["index", *names, "tp", "fp", "tn", "fn", objective, "failed", "error"])
    for t in trials:
        c = t.counts
        counts = [c.tp, c.fp, c.tn, c.fn] if c is not None else ["", "", "", ""]
        w.writerow([t.index, *[_fmt(t.params.get(n)) for n in names], *counts, _fmt(t.objective),
                    int(t.failed), t.error])
    return buf.getvalue()


def params_json(params: Mapping[str, Any]) -> str:
    return json.dumps(dict(params), sort_keys=True)
