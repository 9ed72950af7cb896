"""Run matrices of (embedding, pooling) experiments, store per-run results as
JSONL, aggregate them and render tables and boxplots."""
from __future__ import annotations

import csv
import fcntl
import hashlib
import json
import logging
import math
import os
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import read_corpus
from .embeddings import EmbeddingSpec, FeatureCache
from .model import ModelConfig
from .objective import LossConfig
from .training import TrainingDivergedError, TrainRunConfig, stratified_folds, train_fold

log = logging.getLogger(__name__)

METRICS = ("precision", "recall", "f1", "accuracy", "mae", "rmse")
RECORD_FIELDS = (
    "experiment_id", "embedding", "level", "pretrained", "pooling", "fold", "run", "split",
    *METRICS, "seed", "status", "timestamp",
)


class AggregationError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    embedding: EmbeddingSpec
    pooling: str = "mean"
    loss: LossConfig = LossConfig()
    runs: int = 100
    folds: int = 5
    fold_seed: int = 0

    def identity(self) -> dict:
        return {
            "embedding": asdict(self.embedding),
            "pooling": self.pooling,
            "loss": asdict(self.loss),
            "runs": self.runs,
            "folds": self.folds,
            "fold_seed": self.fold_seed,
        }

    @property
    def experiment_id(self) -> str:
        blob = json.dumps(self.identity(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


class ResultStore:
    """Append-only JSONL file of run records; each append is one locked write."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def append(self, record: dict) -> None:
        missing = [k for k in RECORD_FIELDS if k not in record]
        if missing:
            raise ValueError(f"record missing fields {missing}")
        line = (json.dumps({k: record[k] for k in RECORD_FIELDS}) + "\n").encode()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd = os.open(self.path, os.O_RDWR | os.O_APPEND | os.O_CREAT, 0o644)
        try:
            fcntl.flock(fd, fcntl.LOCK_EX)
            size = os.fstat(fd).st_size
            if size and os.pread(fd, 1, size - 1) != b"\n":
                # a crashed writer left a torn line; start on a fresh one
                line = b"\n" + line
            os.write(fd, line)
        finally:
            fcntl.flock(fd, fcntl.LOCK_UN)
            os.close(fd)

    def load(self) -> list[dict]:
        if not self.path.exists():
            return []
        out = []
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError:
                    # a crash mid-append can only damage the final line
                    log.warning("%s:%d: skipping unparsable record", self.path, lineno)
        return out

    def ok_keys(self) -> set[tuple]:
        return {(r["experiment_id"], r["fold"], r["run"], r["split"]) for r in self.load() if r["status"] == "ok"}


def _ok(records: Iterable[dict], experiment_id: str, split: str) -> list[dict]:
    """Status-ok records, keeping the first of any duplicated (fold, run)."""
    seen = {}
    for r in records:
        if r["experiment_id"] == experiment_id and r["split"] == split and r["status"] == "ok":
            seen.setdefault((r["fold"], r["run"]), r)
    return list(seen.values())


def fold_mean(records, experiment_id: str, fold: int, split: str, metric: str) -> float:
    vals = [r[metric] for r in _ok(records, experiment_id, split) if r["fold"] == fold]
    if not vals:
        raise AggregationError(f"no ok records for {experiment_id} fold {fold} split {split}")
    return float(np.mean(vals))


def global_mean(records, experiment_id: str, split: str, metric: str) -> float:
    vals = [r[metric] for r in _ok(records, experiment_id, split)]
    if not vals:
        raise AggregationError(f"no ok records for {experiment_id} split {split}")
    return float(np.mean(vals))


@dataclass
class BestAverage:
    run: int
    mu_best: float
    metrics: dict[str, float]


def _grid(records, experiment_id, split) -> tuple[list[int], list[int], dict]:
    recs = _ok(records, experiment_id, split)
    if not recs:
        raise AggregationError(f"no ok records for {experiment_id} split {split}")
    folds = sorted({r["fold"] for r in recs})
    runs = sorted({r["run"] for r in recs})
    cell = {(r["fold"], r["run"]): r for r in recs}
    missing = [(f, k) for f in folds for k in runs if (f, k) not in cell]
    if missing:
        raise AggregationError(f"ragged run coverage for {experiment_id}/{split}; missing (fold, run): {missing}")
    return folds, runs, cell


def best_average(records, experiment_id: str, split: str, select_split: str | None = None) -> BestAverage:
    """Run index whose cross-fold mean F1 is highest (smallest index on ties).

    With ``select_split`` set, the run is chosen on that split and the metrics
    of ``split`` at that run are reported.
    """
    sel = select_split or split
    folds, runs, cell = _grid(records, experiment_id, sel)
    best_k, best_v = None, -math.inf
    for k in runs:
        v = float(np.mean([cell[(f, k)]["f1"] for f in folds]))
        if v > best_v:
            best_k, best_v = k, v
    if sel != split:
        folds, runs, cell = _grid(records, experiment_id, split)
        if best_k not in runs:
            raise AggregationError(f"run {best_k} selected on {sel} has no {split} records")
    metrics = {m: float(np.mean([cell[(f, best_k)][m] for f in folds])) for m in METRICS}
    return BestAverage(best_k, metrics["f1"], metrics)


@dataclass
class BestSingle:
    fold: int
    run: int
    r_best: float
    metrics: dict[str, float]


def best_single(records, experiment_id: str, split: str) -> BestSingle:
    recs = _ok(records, experiment_id, split)
    if not recs:
        raise AggregationError(f"no ok records for {experiment_id} split {split}")
    best = min(recs, key=lambda r: (-r["f1"], r["fold"], r["run"]))
    return BestSingle(best["fold"], best["run"], float(best["f1"]), {m: float(best[m]) for m in METRICS})


def experiment_ids(records) -> list[str]:
    return sorted({r["experiment_id"] for r in records})


def _describe(records, experiment_id) -> dict:
    r = next(r for r in records if r["experiment_id"] == experiment_id)
    return {k: r[k] for k in ("embedding", "level", "pretrained", "pooling")}


# Running ----------------------------------------------------------------------

@dataclass
class RunResources:
    """Everything besides the experiment spec that a run needs."""

    features_dir: Path
    train_corpus: Path
    dev_corpus: Path | None = None
    checkpoints_dir: Path | None = None
    model_hidden: int = 128
    model_layers: int = 3
    dropout: float = 0.2
    run_cfg: TrainRunConfig = field(default_factory=TrainRunConfig)


def _record(spec: ExperimentSpec, fold: int, run: int, split: str, metrics, seed: int, status: str) -> dict:
    rec = {
        "experiment_id": spec.experiment_id,
        "embedding": spec.embedding.frontend,
        "level": spec.embedding.level,
        "pretrained": spec.embedding.pretrained,
        "pooling": spec.pooling,
        "fold": fold,
        "run": run,
        "split": split,
        "seed": seed,
        "status": status,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    for m in METRICS:
        rec[m] = getattr(metrics, m) if metrics is not None else None
    return rec


def _load_inputs(res: RunResources):
    train = read_corpus(res.train_corpus)
    dev = read_corpus(res.dev_corpus) if res.dev_corpus else []
    labels = {s.session_id: s.label for s in train + dev}
    unlabeled = [s for s, lab in labels.items() if lab is None]
    if unlabeled:
        raise ValueError(f"sessions without labels: {unlabeled}")
    cache = FeatureCache(res.features_dir)
    feats = {}
    for s in train + dev:
        if cache.has(s.session_id):
            feats[s.session_id] = cache.read(s.session_id)
        else:
            log.warning("session %s has no cached features; dropped", s.session_id)
    return train, dev, labels, feats


def check_features(spec: ExperimentSpec, res: RunResources) -> None:
    cache = FeatureCache(res.features_dir)
    if not (cache.root / "spec.json").exists():
        raise FileNotFoundError(f"no feature cache at {cache.root}")
    cached, _ = cache.read_spec()
    if cached != spec.embedding:
        raise ValueError(f"feature cache {cache.root} holds {cached}, experiment expects {spec.embedding}")
    ids = [s.session_id for s in read_corpus(res.train_corpus)]
    if res.dev_corpus:
        ids += [s.session_id for s in read_corpus(res.dev_corpus)]
    if not any(cache.has(s) for s in ids):
        raise FileNotFoundError(f"feature cache {cache.root} has none of the corpus sessions")


def _run_one(spec: ExperimentSpec, res: RunResources, fold_id: int, run: int) -> list[dict]:
    train, dev, labels, feats = _load_inputs(res)
    folds = stratified_folds([s.session_id for s in train], labels, spec.folds, spec.fold_seed)
    fold = folds[fold_id - 1]
    D = next(iter(feats.values())).D
    model_cfg = ModelConfig(D, res.model_hidden, res.model_layers, res.dropout, spec.pooling)
    ckpt = None
    if res.checkpoints_dir is not None:
        ckpt = Path(res.checkpoints_dir) / spec.experiment_id / str(fold_id) / str(run) / "best.ckpt"
    try:
        tr = train_fold(fold, feats, labels, model_cfg, spec.loss, res.run_cfg, run_seed=run,
                        dev_ids=[s.session_id for s in dev] or None, checkpoint_path=ckpt)
    except TrainingDivergedError as e:
        log.error("experiment %s fold %d run %d failed: %s", spec.experiment_id, fold_id, run, e)
        out = [_record(spec, fold_id, run, "cv", None, run, "failed")]
        if dev:
            out.append(_record(spec, fold_id, run, "dev", None, run, "failed"))
        return out
    out = [_record(spec, fold_id, run, "cv", tr.cv_metrics, run, "ok")]
    if tr.dev_metrics is not None:
        out.append(_record(spec, fold_id, run, "dev", tr.dev_metrics, run, "ok"))
    return out


def run_matrix(specs: Sequence[tuple[ExperimentSpec, RunResources]], store: ResultStore,
               workers: int = 1) -> ResultStore:
    """Train and evaluate every (fold, run) of every spec not already in ``store``.

    All feature caches are checked before any training starts.
    """
    for spec, res in specs:
        check_features(spec, res)
    done = store.ok_keys()
    jobs = []
    for spec, res in specs:
        splits = ("cv", "dev") if res.dev_corpus else ("cv",)
        for f in range(1, spec.folds + 1):
            for k in range(1, spec.runs + 1):
                if all((spec.experiment_id, f, k, s) in done for s in splits):
                    continue
                jobs.append((spec, res, f, k))
    log.info("%d runs to execute", len(jobs))
    if workers <= 1:
        for job in jobs:
            for rec in _run_one(*job):
                store.append(rec)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for recs in pool.map(_run_one, *zip(*jobs)) if jobs else []:
                for rec in recs:
                    store.append(rec)
    return store


# Reporting ----------------------------------------------------------------------

def boxplot_stats(values: Sequence[float]) -> dict[str, float]:
    """Quartiles (linear interpolation) and 1.5 IQR whiskers clipped to the data."""
    v = np.sort(np.asarray(values, dtype=float))
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    lo = v[v >= q1 - 1.5 * iqr].min()
    hi = v[v <= q3 + 1.5 * iqr].max()
    return {"n": len(v), "q1": float(q1), "median": float(med), "q3": float(q3),
            "whisker_low": float(lo), "whisker_high": float(hi)}


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{x:.4f}" if isinstance(x, float) else x for x in row])


def fold_table(records, experiment_id: str) -> list[list]:
    """Rows ``[fold, split, f1, mae, accuracy]`` per fold and split, then Avg rows."""
    rows = []
    splits = [s for s in ("cv", "dev") if _ok(records, experiment_id, s)]
    folds = sorted({r["fold"] for r in records if r["experiment_id"] == experiment_id and r["status"] == "ok"})
    per_split = defaultdict(list)
    for f in folds:
        for s in splits:
            if not any(r["fold"] == f for r in _ok(records, experiment_id, s)):
                continue
            vals = [fold_mean(records, experiment_id, f, s, m) for m in ("f1", "mae", "accuracy")]
            rows.append([f, s, *vals])
            per_split[s].append(vals)
    for s in splits:
        rows.append(["Avg", s, *[float(x) for x in np.mean(per_split[s], axis=0)]])
    return rows


def report(records, out_dir: str | Path, fmt: str = "svg") -> list[Path]:
    """Write fold tables, global-mean and best-run tables, and F1/MAE boxplots."""
    if not records:
        raise AggregationError("result store is empty")
    if fmt not in ("csv", "svg", "png"):
        raise ValueError(f"format must be csv, svg or png, got {fmt!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"cannot write to {out}")
    written = []
    exps = experiment_ids(records)

    for e in exps:
        p = out / f"fold_means_{e}.csv"
        _write_csv(p, ["fold", "split", "f1", "mae", "accuracy"], fold_table(records, e))
        written.append(p)

    rows = []
    for e in exps:
        d = _describe(records, e)
        for s in ("cv", "dev"):
            if _ok(records, e, s):
                rows.append([e, d["embedding"], d["level"], d["pretrained"], d["pooling"], s,
                             *[global_mean(records, e, s, m) for m in ("mae", "f1", "accuracy")]])
    p = out / "global_means.csv"
    _write_csv(p, ["experiment_id", "embedding", "level", "pretrained", "pooling", "split", "mae", "f1", "accuracy"], rows)
    written.append(p)

    rows = []
    for e in exps:
        d = _describe(records, e)
        for s in ("cv", "dev"):
            if not _ok(records, e, s):
                continue
            try:
                ba = best_average(records, e, s, select_split="cv" if _ok(records, e, "cv") else None)
                rows.append([e, d["embedding"], d["pooling"], s, "best-avg", ba.run, "",
                             *[ba.metrics[m] for m in METRICS]])
            except AggregationError as err:
                log.warning("skipping best-avg for %s/%s: %s", e, s, err)
            bs = best_single(records, e, s)
            rows.append([e, d["embedding"], d["pooling"], s, "best-single", bs.run, bs.fold,
                         *[bs.metrics[m] for m in METRICS]])
    p = out / "best_runs.csv"
    _write_csv(p, ["experiment_id", "embedding", "pooling", "split", "stat", "run", "fold",
                   "pre", "rec", "f1", "acc", "mae", "rmse"], rows)
    written.append(p)

    groups = defaultdict(list)
    for r in records:
        if r["status"] == "ok":
            groups[(r["pooling"], r["embedding"], r["split"])].append(r)
    keys = sorted(groups)
    stat_rows = []
    for metric in ("f1", "mae"):
        for key in keys:
            st = boxplot_stats([r[metric] for r in groups[key]])
            stat_rows.append([metric, *key, st["n"], st["q1"], st["median"], st["q3"], st["whisker_low"], st["whisker_high"]])
    p = out / "boxplot_stats.csv"
    _write_csv(p, ["metric", "pooling", "embedding", "split", "n", "q1", "median", "q3", "whisker_low", "whisker_high"], stat_rows)
    written.append(p)

    if fmt != "csv":
        written += _boxplots(groups, keys, out, fmt)
    return written


def _boxplots(groups, keys, out: Path, fmt: str) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    for metric, title in (("f1", "Macro F1 per run"), ("mae", "MAE per run")):
        fig, ax = plt.subplots(figsize=(max(4, 0.9 * len(keys) + 2), 4))
        ax.boxplot([[r[metric] for r in groups[k]] for k in keys])
        ax.set_xticks(range(1, len(keys) + 1))
        ax.set_xticklabels(["\n".join(k) for k in keys], fontsize=7)
        ax.set_title(title)
        ax.set_ylabel(metric.upper())
        fig.tight_layout()
        p = out / f"{metric}_boxplot.{fmt}"
        fig.savefig(p)
        plt.close(fig)
        paths.append(p)
    return paths
