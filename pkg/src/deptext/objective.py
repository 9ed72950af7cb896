"""Multi-task loss (weighted BCE + Huber) and evaluation metrics."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class LossConfig:
    w: float = 0.1
    huber_delta: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.w <= 1.0:
            raise ValueError(f"loss weight w must lie in [0, 1], got {self.w}")
        if self.huber_delta <= 0:
            raise ValueError("huber_delta must be positive")


def sigmoid(x):
    x = np.asarray(x)
    # exp of a non-positive argument only
    ex = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + ex), ex / (1.0 + ex))


def bce(x_c, y_c):
    """Binary cross entropy of ``sigmoid(x_c)`` against ``y_c``, taken from the logit.

    Uses ``max(x, 0) - x*y + log1p(exp(-|x|))`` so no ``log(0)`` is ever formed.
    """
    x = np.asarray(x_c, dtype=np.float64)
    y = np.asarray(y_c, dtype=np.float64)
    out = np.maximum(x, 0) - x * y + np.log1p(np.exp(-np.abs(x)))
    return out[()] if out.ndim == 0 else out


def bce_grad(x_c, y_c):
    return sigmoid(np.asarray(x_c, dtype=np.float64)) - np.asarray(y_c, dtype=np.float64)


def huber(x_r, y_r, delta: float = 1.0):
    d = np.abs(np.asarray(x_r) - np.asarray(y_r))
    out = np.where(d < delta, 0.5 * d * d, delta * (d - 0.5 * delta))
    return out[()] if out.ndim == 0 else out


def huber_grad(x_r, y_r, delta: float = 1.0):
    return np.clip(np.asarray(x_r) - np.asarray(y_r), -delta, delta)


def multitask_loss(x_r, x_c, y_r, y_c, cfg: LossConfig = LossConfig()):
    """``(1 - w) * bce + w * huber``, averaged over items for array inputs."""
    per_item = (1.0 - cfg.w) * bce(x_c, y_c) + cfg.w * huber(x_r, y_r, cfg.huber_delta)
    return float(np.mean(per_item))


def multitask_loss_grad(x_r, x_c, y_r, y_c, cfg: LossConfig = LossConfig()):
    """Gradients of the batch-mean loss w.r.t. ``(x_r, x_c)``."""
    n = np.size(x_c)
    g_c = (1.0 - cfg.w) * bce_grad(x_c, y_c) / n
    g_r = cfg.w * huber_grad(x_r, y_r, cfg.huber_delta) / n
    return g_r, g_c


def predict_labels(x_c) -> np.ndarray:
    # sigmoid(x) >= 0.5  <=>  x >= 0
    return (np.asarray(x_c) >= 0).astype(np.int64)


@dataclass
class MetricRecord:
    split: str
    precision: float
    recall: float
    f1: float
    accuracy: float
    mae: float
    rmse: float

    def as_dict(self) -> dict:
        return asdict(self)


def _check_pair(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("metrics need at least one item")
    return a, b


def classification_metrics(pred_labels, true_labels) -> dict[str, float]:
    """Macro precision/recall/F1 over classes {0, 1}, plus accuracy.

    A class with no predicted and no true members scores 0 on all three.
    """
    p, t = _check_pair(pred_labels, true_labels)
    p = p.astype(np.int64)
    t = t.astype(np.int64)
    precs, recs, f1s = [], [], []
    for c in (0, 1):
        tp = np.sum((p == c) & (t == c))
        n_pred = np.sum(p == c)
        n_true = np.sum(t == c)
        prec = tp / n_pred if n_pred else 0.0
        rec = tp / n_true if n_true else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
        precs.append(prec)
        recs.append(rec)
        f1s.append(f1)
    return {
        "precision": float(np.mean(precs)),
        "recall": float(np.mean(recs)),
        "f1": float(np.mean(f1s)),
        "accuracy": float(np.mean(p == t)),
    }


def regression_metrics(pred_scores, true_scores) -> dict[str, float]:
    x, y = _check_pair(pred_scores, true_scores)
    err = x.astype(np.float64) - y.astype(np.float64)
    return {"mae": float(np.mean(np.abs(err))), "rmse": float(np.sqrt(np.mean(err * err)))}


def metric_record(split: str, x_c, x_r, y_c, y_r) -> MetricRecord:
    cls = classification_metrics(predict_labels(x_c), y_c)
    reg = regression_metrics(x_r, y_r)
    return MetricRecord(split=split, **cls, **reg)
