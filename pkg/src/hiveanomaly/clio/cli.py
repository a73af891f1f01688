"""Command-line pipeline: synth, split, train, tune, detect, eval, report.

Every command works inside one run directory::

    manifest.json          config, config hash, seeds, versions, commands run
    data/<hive>.csv        traces (and <hive>.labels.csv)
    split.json             day split, window counts, exclusion and vetting reports
    models/<kind>.ckpt     fitted detectors
    tuning/<kind>/...      trial logs, best parameters, alpha calibration
    verdicts/<kind>.csv    per-window scores and verdicts
    reports/...            evaluation reports and the summary table
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from importlib import metadata
from pathlib import Path
from typing import Sequence

from .. import synthgen, tuner
from ..core import (NORMAL, SWARM, DaySplit, SplitConfig, SplitError, build_split, contiguous_blocks, derive_seed,
                    plan_days, windows_for_days)
from ..detectors import KINDS, calibrate_alpha, detector_predict, detector_scores, fit_detector
from ..evaluator import (WEIGHTED, ConfusionCounts, DatasetRow, EvalReport, Metrics, aggregate, confusion, evaluate,
                         long_format, metrics, report_csv, table_text)
from ..rba import vet_training_data
from . import checkpoint
from .config import ConfigError, RunConfig, load_config, override
from .io import FormatError, atomic_write, format_time, ingest, read_labels, write_labels, write_trace

ORDER = ("rba", "lof", "envelope", "iforest", "ocsvm", "ae")


class MissingInput(FileNotFoundError):
    pass


class Run:
    def __init__(self, out_dir: str, cfg: RunConfig, argv: Sequence[str]):
        self.dir = Path(out_dir)
        self.cfg = cfg
        self.argv = list(argv)

    def path(self, *parts: str) -> Path:
        return self.dir.joinpath(*parts)

    def write_text(self, rel: str, text: str) -> Path:
        p = self.path(rel)
        atomic_write(p, text)
        return p

    def write_json(self, rel: str, obj) -> Path:
        return self.write_text(rel, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def read_json(self, rel: str, hint: str):
        p = self.path(rel)
        if not p.exists():
            raise MissingInput(f"{p} not found; run `{hint}` first")
        return json.loads(p.read_text(encoding="utf-8"))

    # --- manifest ---------------------------------------------------------
    def record(self, command: str, outputs: Sequence[Path]) -> None:
        p = self.path("manifest.json")
        man = json.loads(p.read_text(encoding="utf-8")) if p.exists() else {}
        man.setdefault("format", "hiveanomaly-run")
        man["config"] = self.cfg.to_dict()
        man["config_sha256"] = self.cfg.digest()
        man["seed"] = self.cfg.seed
        man["versions"] = _versions()
        cmds = man.setdefault("commands", {})
        cmds[command] = {"argv": self.argv, "config_sha256": self.cfg.digest(), "seed": self.cfg.seed,
                         "outputs": sorted(str(o.relative_to(self.dir)) for o in outputs)}
        self.write_json("manifest.json", man)

    # --- data ---------------------------------------------------------------
    def data(self) -> tuple[dict, dict]:
        cfg = self.cfg
        traces, labels = {}, {}
        if cfg.traces:
            for name, rel in sorted(cfg.traces.items()):
                traces[name] = ingest(self._resolve(rel), name)
                lab = cfg.labels.get(name)
                labels[name] = read_labels(self._resolve(lab)) if lab else []
        else:
            d = self.path(cfg.data_dir)
            files = sorted(f for f in d.glob("*.csv") if not f.name.endswith(".labels.csv")) if d.is_dir() else []
            if not files:
                raise MissingInput(f"no trace files under {d}; run `synth` or set `traces` in the config")
            for f in files:
                name = f.stem
                traces[name] = ingest(f, name)
                lf = f.with_name(f"{name}.labels.csv")
                labels[name] = read_labels(lf) if lf.exists() else []
        return traces, labels

    def _resolve(self, rel: str) -> Path:
        p = Path(rel)
        if not p.is_absolute():
            p = self.path(rel)
        if not p.exists():
            raise MissingInput(f"{p} not found")
        return p

    def split_config(self) -> SplitConfig:
        s = self.cfg.split
        return SplitConfig(s.training_source, s.validation_fraction, tuple(self.cfg.sensors), s.length,
                           s.train_stride, s.eval_stride)

    def plan(self):
        days = DaySplit.from_dict(self.read_json("split.json", "split")["days"])
        traces, labels = self.data()
        for src in [days.training_source, *days.tests]:
            if src not in traces:
                raise MissingInput(f"trace for {src!r} listed in split.json is missing")
        return build_split(traces, labels, self.split_config(), days), traces, labels


def _versions() -> dict:
    out = {}
    for dist in ("artifact", "numpy", "scipy", "scikit-learn", "torch", "PyYAML"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = None
    return out


def _kinds(detector: str) -> list[str]:
    if detector == "all":
        return list(ORDER)
    if detector not in KINDS:
        raise ConfigError(f"unknown detector {detector!r}; expected one of {', '.join(ORDER)} or 'all'")
    return [detector]


def _ckpt(kind: str) -> str:
    return f"models/{kind}.ckpt"


def _fit_options(cfg: RunConfig, kind: str) -> dict:
    t = cfg.tuner
    if kind == "ae":
        return {"max_epochs": t.max_epochs, "patience": t.patience, "batch_size": t.batch_size}
    if kind == "ocsvm":
        return {"max_iter": t.ocsvm_max_iter}
    return {}


# ---------------------------------------------------------------------------
# commands

def cmd_synth(run: Run, args) -> list[Path]:
    cfg = run.cfg
    if cfg.synth.scenario != "full_scale":
        raise ConfigError(f"unknown synthetic scenario {cfg.synth.scenario!r}")
    profile = synthgen.HiveProfile(noise_std=cfg.synth.noise_std, diurnal_amplitude=cfg.synth.diurnal_amplitude,
                                   seed=cfg.seed)
    bench = synthgen.make_benchmark(profile, synthgen.full_scale_scenario(cfg.seed))
    out = []
    for name in sorted(bench.traces):
        out.append(run.path(cfg.data_dir, f"{name}.csv"))
        write_trace(out[-1], bench.traces[name])
        out.append(run.path(cfg.data_dir, f"{name}.labels.csv"))
        write_labels(out[-1], bench.labels[name])
        print(f"synth: {name}: {len(bench.traces[name])} minutes, "
              f"{sum(e.kind == SWARM for e in bench.labels[name])} swarm events")
    return out


def cmd_split(run: Run, args) -> list[Path]:
    cfg = run.cfg
    traces, labels = run.data()
    days = plan_days(labels, cfg.split.training_source, cfg.split.validation_fraction)
    plan = build_split(traces, labels, run.split_config(), days)
    src = traces[days.training_source]
    vet = {}
    for role, ds in (("training", days.training), ("validation", days.validation)):
        for a, b in contiguous_blocks(ds):
            for s, runs in vet_training_data(src.slice_minutes(a, b), sensors=cfg.sensors).items():
                vet.setdefault(role, {}).setdefault(s, []).extend([format_time(x), format_time(y)] for x, y in runs)

    def counts(ws):
        out = {}
        for w in ws:
            out[w.label] = out.get(w.label, 0) + 1
        return dict(sorted(out.items()))

    report = {
        "days": days.to_dict(),
        "sensors": list(cfg.sensors),
        "windows": {"training": counts(plan.training), "validation": counts(plan.validation),
                    "holdout": counts(plan.holdout), **{f"test:{k}": counts(v) for k, v in plan.tests.items()}},
        "excluded_windows": plan.excluded,
        "rba_vetting": vet,
    }
    p = run.write_json("split.json", report)
    print(f"split: {len(days.training)} training, {len(days.validation)} validation, {len(days.holdout)} holdout "
          f"day(s); tests {sorted(days.tests)}; excluded windows {plan.excluded}")
    if vet:
        print(f"split: warning: swarm-like runs in normal data: {vet}", file=sys.stderr)
    return [p]


def _pretrain_windows(run: Run, plan, traces, labels):
    s = run.cfg.split
    if s.pretrain_stride == s.train_stride:
        return plan.training, plan.validation
    src = plan.days.training_source
    ev = list(labels.get(src, ()))
    out = []
    for days in (plan.days.training, plan.days.validation):
        ws, _ = windows_for_days(traces[src], days, run.cfg.sensors, s.length, s.pretrain_stride, ev)
        out.append([w for w in ws if w.label == NORMAL])
    return out[0], out[1]


def cmd_train(run: Run, args) -> list[Path]:
    plan, traces, labels = run.plan()
    out = []
    for kind in _kinds(run.cfg.detector):
        params = dict(run.cfg.detector_params.get(kind, {}))
        seed = _seed(run.cfg.seed, kind)
        if kind == "ae":
            train_w, val_w = _pretrain_windows(run, plan, traces, labels)
            n = run.cfg.tuner.pretrain_trials
            if n > 0 and not params:
                best, trials, models = tuner.pretrain_search(plan, n, seed, training=train_w, validation=val_w,
                                                             fit_options=_fit_options(run.cfg, "ae"))
                out.append(run.write_text("tuning/ae/pretrain_trials.csv",
                                          tuner.trial_log_csv(trials, "ae", n, seed, "val_loss")))
                if best.failed:
                    raise RuntimeError(f"every pre-training trial failed; first error: {best.error}")
                dm = models[best.index]
                print(f"train: ae: best of {n} pre-training trials: {tuner.params_json(best.params)} "
                      f"val_loss={best.objective:.6g}")
            else:
                dm = fit_detector("ae", params, train_w, val_w, seed=seed, **_fit_options(run.cfg, "ae"))
        else:
            dm = fit_detector(kind, params, plan.training, plan.validation, seed=seed, **_fit_options(run.cfg, kind))
        checkpoint.save(run.path(_ckpt(kind)), dm, {"seed": seed, "sensors": list(run.cfg.sensors)})
        out.append(run.path(_ckpt(kind)))
        print(f"train: {kind}: saved {_ckpt(kind)}")
    return out


def _seed(seed: int, kind: str) -> int:
    return derive_seed(seed, "detector", kind) % (2**31)


def cmd_tune(run: Run, args) -> list[Path]:
    plan, _, _ = run.plan()
    out = []
    labels = [w.label for w in plan.holdout]
    for kind in _kinds(run.cfg.detector):
        if kind == "rba":
            print("tune: rba: no tunable parameters, skipped")
            continue
        seed = _seed(run.cfg.seed, kind)
        if kind == "ae":
            dm, head = checkpoint.load(run.path(_ckpt("ae")), "ae")
            dm = calibrate_alpha(dm, plan.holdout)
            c = confusion(detector_predict(dm, plan.holdout), labels)
            m = metrics(c)
            checkpoint.save(run.path(_ckpt("ae")), dm, head)
            out += [run.path(_ckpt("ae")), run.write_json("tuning/ae/alpha.json", {
                "alpha": dm.model.alpha, "holdout_f1": m.f1, "counts": c.__dict__,
                "degenerate": dm.extra["alpha_degenerate"],
            })]
            print(f"tune: ae: alpha={dm.model.alpha!r} holdout F1={m.f1}")
            continue
        n = run.cfg.tuner.trials
        best, trials = tuner.random_search(kind, None, plan, n, seed, run.cfg.tuner.workers,
                                           fit_options=_fit_options(run.cfg, kind))
        out.append(run.write_text(f"tuning/{kind}/trials.csv", tuner.trial_log_csv(trials, kind, n, seed)))
        if best.failed:
            raise RuntimeError(f"every {kind} trial failed; first error: {best.error}")
        out.append(run.write_json(f"tuning/{kind}/best.json", {
            "index": best.index, "params": dict(best.params), "objective": best.objective, "seed": best.seed,
            "counts": best.counts.__dict__ if best.counts else None, "n_trials": n}))
        dm = fit_detector(kind, best.params, plan.training, plan.validation, seed=best.seed,
                          **_fit_options(run.cfg, kind))
        checkpoint.save(run.path(_ckpt(kind)), dm, {"seed": best.seed, "sensors": list(run.cfg.sensors),
                                                    "trial": best.index})
        out.append(run.path(_ckpt(kind)))
        print(f"tune: {kind}: best trial {best.index} F1={best.objective} params={tuner.params_json(best.params)}")
    return out


VERDICT_HEADER = ("role", "dataset", "start", "label", "score", "verdict")


def cmd_detect(run: Run, args) -> list[Path]:
    plan, _, _ = run.plan()
    out = []
    for kind in _kinds(run.cfg.detector):
        dm, _ = checkpoint.load(run.path(_ckpt(kind)), kind)
        if dm.n_sensors != len(run.cfg.sensors):
            raise ValueError(f"model {kind} was fitted on {dm.n_sensors} sensor(s) {list(dm.sensors)}, "
                             f"config selects {len(run.cfg.sensors)} {list(run.cfg.sensors)}")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(VERDICT_HEADER)
        sets = [("holdout", plan.days.training_source, plan.holdout)]
        sets += [("test", name, plan.tests[name]) for name in sorted(plan.tests)]
        for role, name, ws in sets:
            if not ws:
                continue
            scores = detector_scores(dm, ws)
            verdicts = detector_predict(dm, ws)
            for win, s, v in zip(ws, scores, verdicts):
                w.writerow([role, name, format_time(win.start), win.label, repr(float(s)), int(v)])
        out.append(run.write_text(f"verdicts/{kind}.csv", buf.getvalue()))
        print(f"detect: {kind}: verdicts/{kind}.csv")
    return out


def _read_verdicts(run: Run, kind: str) -> dict:
    p = run.path(f"verdicts/{kind}.csv")
    if not p.exists():
        raise MissingInput(f"{p} not found; run `detect --detector {kind}` first")
    per: dict[str, tuple[list, list]] = {}
    with open(p, newline="", encoding="utf-8") as fh:
        rows = csv.reader(fh)
        header = tuple(next(rows))
        if header != VERDICT_HEADER:
            raise FormatError(f"{p}:1: unexpected verdict header")
        for row in rows:
            if row[0] != "test":
                continue
            pred, lab = per.setdefault(row[1], ([], []))
            pred.append(row[5] == "1")
            lab.append(row[3])
    return per


def _report_json(rep: EvalReport, cfg: RunConfig) -> dict:
    def row(r: DatasetRow):
        return {"dataset": r.dataset, "counts": r.counts.__dict__, "precision": r.metrics.precision,
                "recall": r.metrics.recall, "f1": r.metrics.f1, "excluded": r.excluded}
    return {"detector": rep.detector, "aggregation": rep.mode, "rows": [row(r) for r in rep.rows],
            "overall": row(rep.overall), "config": cfg.to_dict()}


def _report_from_json(d: dict) -> EvalReport:
    def row(r):
        return DatasetRow(r["dataset"], ConfusionCounts(**r["counts"]),
                          Metrics(r["precision"], r["recall"], r["f1"]), r["excluded"])
    return EvalReport(d["detector"], tuple(row(r) for r in d["rows"]), row(d["overall"]), d["aggregation"])


def cmd_eval(run: Run, args) -> list[Path]:
    out = []
    if args.counts:
        try:
            tp, fp, tn, fn = (int(x) for x in args.counts.split(","))
        except ValueError:
            raise ConfigError("--counts expects TP,FP,TN,FN") from None
        c = ConfusionCounts(tp, fp, fn, tn)
        r = DatasetRow(args.dataset or "dataset", c, metrics(c))
        kind = run.cfg.detector
        reports = [EvalReport(kind, (r,), aggregate([r], WEIGHTED), WEIGHTED)]
    else:
        reports = []
        for kind in _kinds(run.cfg.detector):
            per = _read_verdicts(run, kind)
            if not per:
                raise MissingInput(f"verdicts/{kind}.csv holds no test windows")
            reports.append(evaluate(kind, per, WEIGHTED))
    for rep in reports:
        out.append(run.write_text(f"reports/eval_{rep.detector}.csv", report_csv([rep])))
        out.append(run.write_json(f"reports/eval_{rep.detector}.json", _report_json(rep, run.cfg)))
    sys.stdout.write(table_text(reports))
    return out


def cmd_report(run: Run, args) -> list[Path]:
    files = sorted(run.path("reports").glob("eval_*.json"))
    if not files:
        raise MissingInput(f"no evaluation reports under {run.path('reports')}; run `eval` first")
    reports = [_report_from_json(json.loads(f.read_text(encoding="utf-8"))) for f in files]
    rank = {k: i for i, k in enumerate(ORDER)}
    reports.sort(key=lambda r: rank.get(r.detector, len(rank)))
    text = table_text(reports)
    out = [run.write_text("reports/table.txt", text), run.write_text("reports/table.csv", report_csv(reports)),
           run.write_text("reports/long.csv", long_format(reports))]
    sys.stdout.write(text)
    return out


COMMANDS = {"synth": cmd_synth, "split": cmd_split, "train": cmd_train, "tune": cmd_tune, "detect": cmd_detect,
            "eval": cmd_eval, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hiveanomaly", description="Beehive anomaly detection pipeline")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="run configuration (YAML/JSON) or a run manifest")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out-dir", default="run", help="run directory (default: ./run)")
    ap.add_argument("--detector", help=f"one of {', '.join(ORDER)} or 'all'")
    ap.add_argument("--sensors", help="comma-separated sensor ids")
    ap.add_argument("--stride-min", type=int, help="evaluation window stride in minutes")
    ap.add_argument("--trials", type=int, help="random-search trials per detector")
    ap.add_argument("--counts", help="eval only: evaluate literal counts TP,FP,TN,FN")
    ap.add_argument("--dataset", help="eval only: dataset name for --counts")
    return ap


_ERROR_CODES = (
    (ConfigError, "config"), (MissingInput, "missing_input"), (FormatError, "format"),
    (checkpoint.CheckpointError, "checkpoint"), (SplitError, "split"), (synthgen.ScenarioError, "scenario"),
    (KeyError, "invalid_input"), (ValueError, "invalid_input"),
)


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        cfg_path = args.config
        if cfg_path is None and Path(args.out_dir, "manifest.json").exists():
            cfg_path = str(Path(args.out_dir, "manifest.json"))
        cfg = override(load_config(cfg_path), seed=args.seed, detector=args.detector, sensors=args.sensors,
                       stride_min=args.stride_min, trials=args.trials)
        if cfg.split.eval_stride < 1 or cfg.tuner.trials < 1:
            raise ConfigError("stride and trial counts must be >= 1")
        run = Run(args.out_dir, cfg, argv)
        outputs = COMMANDS[args.command](run, args)
        label = args.command if args.command in ("synth", "split", "report") else f"{args.command}:{cfg.detector}"
        run.record(label, outputs)
        return 0
    except Exception as exc:  # one machine-parsable line, nonzero exit
        code = next((c for t, c in _ERROR_CODES if isinstance(exc, t)), "internal")
        msg = str(exc.args[0]) if isinstance(exc, KeyError) and exc.args else str(exc)
        print(json.dumps({"error": code, "command": args.command, "message": " ".join(msg.split())}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
