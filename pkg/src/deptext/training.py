"""Cross-validated training recipe: stratified folds, minority oversampling,
class-balanced padded batches, Adam with plateau decay and early stopping."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .corpus import SessionLabel
from .embeddings.features import FeatureSequence
from .model import Checkpoint, InitSpec, ModelConfig, backward, forward, init_model, save_checkpoint
from .objective import LossConfig, MetricRecord, metric_record, multitask_loss, multitask_loss_grad

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class FoldSplit:
    fold_id: int
    train_ids: tuple[str, ...]
    cv_ids: tuple[str, ...]


@dataclass(frozen=True)
class TrainRunConfig:
    max_epochs: int = 200
    initial_lr: float = 0.004
    lr_reduce_factor: float = 10.0
    lr_patience: int = 3
    early_stop_patience: int = 10
    batch_size: int = 32
    eval_batch_size: int = 32

    def __post_init__(self):
        for name in ("max_epochs", "lr_patience", "early_stop_patience", "batch_size", "eval_batch_size"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.batch_size % 2:
            raise ValueError("batch_size must be even for 1:1 class balance")
        if self.lr_reduce_factor <= 1:
            raise ValueError("lr_reduce_factor must exceed 1")

    def as_dict(self) -> dict:
        return asdict(self)


def _label_of(labels, sid) -> int:
    lab = labels[sid]
    return lab.y_c if isinstance(lab, SessionLabel) else int(lab)


def stratified_folds(session_ids: Sequence[str], labels: Mapping, n_folds: int = 5, seed: int = 0) -> list[FoldSplit]:
    """Split ids into ``n_folds`` folds stratified on the binary label.

    Each class is shuffled under ``seed`` and dealt round-robin, so every cv set
    receives ``floor`` or ``ceil`` of its class's share.
    """
    ids = sorted(set(session_ids))
    if len(ids) != len(session_ids):
        raise ValueError("session ids must be unique")
    rng = np.random.default_rng(seed)
    assignment: dict[str, int] = {}
    offset = 0
    for cls in (0, 1):
        members = [s for s in ids if _label_of(labels, s) == cls]
        if len(members) < n_folds:
            raise ValueError(f"class {cls} has {len(members)} sessions, fewer than {n_folds} folds")
        order = rng.permutation(len(members))
        for rank, k in enumerate(order):
            assignment[members[k]] = (rank + offset) % n_folds
        # start the next class where this one stopped so fold sizes stay even
        offset = (offset + len(members)) % n_folds
    folds = []
    for f in range(n_folds):
        cv = tuple(s for s in ids if assignment[s] == f)
        train = tuple(s for s in ids if assignment[s] != f)
        folds.append(FoldSplit(f + 1, train, cv))
    return folds


def oversample(train_ids: Sequence[str], labels: Mapping, rng) -> list[str]:
    """Duplicate randomly drawn minority ids until both classes are equally frequent."""
    rng = np.random.default_rng(rng)
    by_cls = {0: [], 1: []}
    for s in train_ids:
        by_cls[_label_of(labels, s)].append(s)
    if not by_cls[0] or not by_cls[1]:
        raise ValueError("oversampling needs both classes present")
    minority = 0 if len(by_cls[0]) < len(by_cls[1]) else 1
    deficit = len(by_cls[1 - minority]) - len(by_cls[minority])
    extra = [by_cls[minority][i] for i in rng.integers(0, len(by_cls[minority]), size=deficit)]
    return list(train_ids) + extra


@dataclass
class Batch:
    ids: list[str]
    X: np.ndarray
    mask: np.ndarray
    y_c: np.ndarray
    y_r: np.ndarray


def pad_sequences(seqs: Sequence[np.ndarray], dtype=np.float32) -> tuple[np.ndarray, np.ndarray]:
    """Zero-pad (T_i, D) arrays to the longest T; returns ``(X, mask)``."""
    T = max(s.shape[0] for s in seqs)
    D = seqs[0].shape[1]
    X = np.zeros((len(seqs), T, D), dtype=dtype)
    mask = np.zeros((len(seqs), T), dtype=bool)
    for i, s in enumerate(seqs):
        X[i, :len(s)] = s
        mask[i, :len(s)] = True
    return X, mask


def collate(ids: Sequence[str], features: Mapping[str, FeatureSequence], labels: Mapping) -> Batch:
    X, mask = pad_sequences([features[s].X for s in ids])
    y_c = np.array([_label_of(labels, s) for s in ids], dtype=np.float64)
    y_r = np.array([labels[s].y_r for s in ids], dtype=np.float64)
    return Batch(list(ids), X, mask, y_c, y_r)


def balanced_id_batches(pool: Sequence[str], labels: Mapping, batch_size: int, rng) -> list[list[str]]:
    """Shuffle ``pool`` into batches holding ``batch_size // 2`` ids of each class.

    Leftovers form trailing batches that alternate classes while both last.
    """
    half = batch_size // 2
    pos = [s for s in pool if _label_of(labels, s) == 1]
    neg = [s for s in pool if _label_of(labels, s) == 0]
    pos = [pos[i] for i in rng.permutation(len(pos))]
    neg = [neg[i] for i in rng.permutation(len(neg))]
    n_full = min(len(pos), len(neg)) // half
    batches = []
    for b in range(n_full):
        batch = pos[b * half:(b + 1) * half] + neg[b * half:(b + 1) * half]
        batches.append([batch[i] for i in rng.permutation(len(batch))])
    p_rest, n_rest = pos[n_full * half:], neg[n_full * half:]
    rest = []
    for i in range(max(len(p_rest), len(n_rest))):
        rest += p_rest[i:i + 1] + n_rest[i:i + 1]
    for i in range(0, len(rest), batch_size):
        chunk = rest[i:i + batch_size]
        batches.append([chunk[k] for k in rng.permutation(len(chunk))])
    return batches


def make_batches(pool, features, labels, batch_size: int = 32, rng=None) -> list[Batch]:
    rng = np.random.default_rng(rng)
    return [collate(ids, features, labels) for ids in balanced_id_batches(pool, labels, batch_size, rng)]


class Adam:
    """Adam over a dict of parameter arrays, updated in place."""

    def __init__(self, params: dict[str, np.ndarray], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in self.params.items():
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)


class PlateauScheduler:
    """Divide the learning rate by ``factor`` after ``patience`` epochs without improvement."""

    def __init__(self, lr: float, factor: float = 10.0, patience: int = 3):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.bad_epochs = 0

    def step(self, improved: bool) -> float:
        if improved:
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr /= self.factor
                self.bad_epochs = 0
        return self.lr


class EarlyStopping:
    def __init__(self, patience: int = 10):
        self.patience = patience
        self.counter = 0

    def step(self, improved: bool) -> bool:
        self.counter = 0 if improved else self.counter + 1
        return self.counter >= self.patience


def predict_sessions(params, config: ModelConfig, ids: Sequence[str], features: Mapping[str, FeatureSequence],
                     batch_size: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """Evaluation-mode ``(x_c, x_r)`` for ``ids``, batched by similar length."""
    missing = [s for s in ids if s not in features]
    if missing:
        raise KeyError(f"no features for sessions {missing}")
    order = sorted(range(len(ids)), key=lambda i: features[ids[i]].T)
    x_c = np.empty(len(ids))
    x_r = np.empty(len(ids))
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        X, mask = pad_sequences([features[ids[i]].X for i in idx])
        res = forward(params, config, X, mask, training=False)
        x_c[idx] = res.x_c
        x_r[idx] = res.x_r
    return x_c, x_r


def dataset_loss(params, config, ids, features, labels, loss_cfg: LossConfig, batch_size: int = 32) -> float:
    x_c, x_r = predict_sessions(params, config, ids, features, batch_size)
    y_c = [_label_of(labels, s) for s in ids]
    y_r = [labels[s].y_r for s in ids]
    return multitask_loss(x_r, x_c, y_r, y_c, loss_cfg)


def evaluate_params(params, config, ids, features, labels, split: str, batch_size: int = 32) -> MetricRecord:
    x_c, x_r = predict_sessions(params, config, ids, features, batch_size)
    y_c = [_label_of(labels, s) for s in ids]
    y_r = [labels[s].y_r for s in ids]
    return metric_record(split, x_c, x_r, y_c, y_r)


def evaluate(checkpoint: Checkpoint, ids: Sequence[str], features, labels, split: str = "dev") -> MetricRecord:
    """Metrics of a checkpoint on ``ids`` with dropout off."""
    return evaluate_params(checkpoint.params, checkpoint.config, list(ids), features, labels, split)


@dataclass
class TrainedRun:
    checkpoint: Checkpoint
    best_cv_loss: float
    best_epoch: int
    epochs_trained: int
    cv_metrics: MetricRecord
    dev_metrics: MetricRecord | None
    cv_trace: list[float] = field(default_factory=list)
    lr_trace: list[float] = field(default_factory=list)
    checkpoint_path: Path | None = None


def run_seeds(run_seed: int, fold_id: int) -> tuple[int, np.random.Generator, np.random.Generator]:
    """Initialisation seed plus sampling and dropout generators for one (run, fold)."""
    init_ss, sample_ss, drop_ss = np.random.SeedSequence([run_seed, fold_id]).spawn(3)
    return int(init_ss.generate_state(1)[0]), np.random.default_rng(sample_ss), np.random.default_rng(drop_ss)


def train_fold(
    fold: FoldSplit,
    features: Mapping[str, FeatureSequence],
    labels: Mapping,
    model_cfg: ModelConfig,
    loss_cfg: LossConfig = LossConfig(),
    run_cfg: TrainRunConfig = TrainRunConfig(),
    run_seed: int = 0,
    dev_ids: Sequence[str] | None = None,
    checkpoint_path: str | Path | None = None,
    epoch_callback: Callable[[int, dict], bool] | None = None,
) -> TrainedRun:
    """Train on ``fold.train_ids``, select the epoch with the lowest cv loss.

    ``epoch_callback(epoch, params)`` runs after every epoch; returning True
    stops training early.
    """
    train_ids = [s for s in fold.train_ids if s in features]
    cv_ids = [s for s in fold.cv_ids if s in features]
    dropped = sorted(set(fold.train_ids + fold.cv_ids) - set(features))
    if dropped:
        log.warning("fold %d: dropping %d sessions without features: %s", fold.fold_id, len(dropped), dropped)
    if not cv_ids:
        raise ValueError(f"fold {fold.fold_id} has no cv sessions with features")

    init_seed, sample_rng, drop_rng = run_seeds(run_seed, fold.fold_id)
    init = InitSpec(seed=init_seed)
    params = init_model(model_cfg, init)
    pool = oversample(train_ids, labels, sample_rng)
    opt = Adam(params, run_cfg.initial_lr)
    sched = PlateauScheduler(run_cfg.initial_lr, run_cfg.lr_reduce_factor, run_cfg.lr_patience)
    stopper = EarlyStopping(run_cfg.early_stop_patience)

    best_loss = math.inf
    best_params = {k: v.copy() for k, v in params.items()}
    best_epoch = 0
    cv_trace: list[float] = []
    lr_trace: list[float] = []
    epoch = 0
    for epoch in range(1, run_cfg.max_epochs + 1):
        lr_trace.append(opt.lr)
        for ids in balanced_id_batches(pool, labels, run_cfg.batch_size, sample_rng):
            batch = collate(ids, features, labels)
            res = forward(params, model_cfg, batch.X, batch.mask, training=True, rng=drop_rng)
            loss = multitask_loss(res.x_r, res.x_c, batch.y_r, batch.y_c, loss_cfg)
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"fold {fold.fold_id} run {run_seed}: non-finite training loss at epoch {epoch}")
            g_r, g_c = multitask_loss_grad(res.x_r, res.x_c, batch.y_r, batch.y_c, loss_cfg)
            grads = backward(params, model_cfg, res, np.stack([g_c, g_r], axis=1))
            opt.step(grads)

        cv_loss = dataset_loss(params, model_cfg, cv_ids, features, labels, loss_cfg, run_cfg.eval_batch_size)
        if not math.isfinite(cv_loss):
            raise TrainingDivergedError(f"fold {fold.fold_id} run {run_seed}: non-finite cv loss at epoch {epoch}")
        cv_trace.append(cv_loss)
        improved = cv_loss < best_loss
        if improved:
            best_loss = cv_loss
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in params.items()}
        opt.lr = sched.step(improved)
        log.debug("fold %d epoch %d cv_loss %.5f lr %.2e", fold.fold_id, epoch, cv_loss, opt.lr)
        if stopper.step(improved):
            break
        if epoch_callback is not None and epoch_callback(epoch, params):
            break

    ckpt = Checkpoint(model_cfg, best_params, init, seed=run_seed, epoch=best_epoch, cv_loss=best_loss,
                      extra={"fold": fold.fold_id, "loss": asdict(loss_cfg), "run": run_cfg.as_dict()})
    cv_metrics = evaluate(ckpt, cv_ids, features, labels, "cv")
    dev_metrics = None
    if dev_ids:
        dev_metrics = evaluate(ckpt, [s for s in dev_ids if s in features], features, labels, "dev")
    path = None
    if checkpoint_path is not None:
        path = save_checkpoint(ckpt, checkpoint_path)
    return TrainedRun(ckpt, best_loss, best_epoch, epoch, cv_metrics, dev_metrics, cv_trace, lr_trace, path)
