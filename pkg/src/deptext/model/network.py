"""Stacked bidirectional GRU encoder with masked pooling and a two-output head."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .pooling import POOLING_METHODS, EmptySequenceError, pool_backward, pool_forward


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    hidden_units: int = 128
    num_layers: int = 3
    dropout: float = 0.2
    pooling: str = "mean"

    def __post_init__(self):
        if self.pooling not in POOLING_METHODS:
            raise ValueError(f"pooling must be one of {POOLING_METHODS}, got {self.pooling!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.input_dim < 1 or self.hidden_units < 1 or self.num_layers < 1:
            raise ValueError("input_dim, hidden_units and num_layers must be positive")

    @property
    def output_dim(self) -> int:
        return 2 * self.hidden_units

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class InitSpec:
    """Xavier-uniform weights, N(0, attention_std) attention vector, zero biases."""

    seed: int = 0
    attention_std: float = 0.05
    dtype: str = "float32"

    def as_dict(self) -> dict:
        return asdict(self)


def xavier_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def _xavier_gates(rng, fan_in, hidden, dtype):
    # each gate block is its own (fan_in, hidden) matrix
    beta = xavier_bound(fan_in, hidden)
    return rng.uniform(-beta, beta, size=(fan_in, 3 * hidden)).astype(dtype)


def param_names(config: ModelConfig) -> list[str]:
    names = []
    for layer in range(config.num_layers):
        for d in "fb":
            names += [f"gru{layer}.{d}.wx", f"gru{layer}.{d}.wh", f"gru{layer}.{d}.bx", f"gru{layer}.{d}.bh"]
    if config.pooling == "attention":
        names.append("att.v")
    names += ["head.w", "head.b"]
    return names


def init_model(config: ModelConfig, init: InitSpec = InitSpec()) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(init.seed)
    dtype = np.dtype(init.dtype)
    H = config.hidden_units
    params: dict[str, np.ndarray] = {}
    for layer in range(config.num_layers):
        fan_in = config.input_dim if layer == 0 else 2 * H
        for d in "fb":
            params[f"gru{layer}.{d}.wx"] = _xavier_gates(rng, fan_in, H, dtype)
            params[f"gru{layer}.{d}.wh"] = _xavier_gates(rng, H, H, dtype)
            params[f"gru{layer}.{d}.bx"] = np.zeros(3 * H, dtype=dtype)
            params[f"gru{layer}.{d}.bh"] = np.zeros(3 * H, dtype=dtype)
    if config.pooling == "attention":
        params["att.v"] = rng.normal(0.0, init.attention_std, size=2 * H).astype(dtype)
    beta = xavier_bound(2 * H, 2)
    params["head.w"] = rng.uniform(-beta, beta, size=(2 * H, 2)).astype(dtype)
    params["head.b"] = np.zeros(2, dtype=dtype)
    return params


def lengths_from_mask(mask) -> np.ndarray:
    """Valid lengths of a prefix mask; rejects empty or non-prefix rows."""
    mask = np.asarray(mask, dtype=bool)
    lengths = mask.sum(axis=1)
    if (lengths == 0).any():
        raise EmptySequenceError(f"items {np.flatnonzero(lengths == 0).tolist()} have no valid steps")
    prefix = np.arange(mask.shape[1])[None, :] < lengths[:, None]
    if not np.array_equal(prefix, mask):
        raise ValueError("mask must mark a contiguous valid prefix of each sequence")
    return lengths


def reverse_index(lengths, T: int) -> np.ndarray:
    """Index that reverses each valid prefix and leaves padding in place (an involution)."""
    t = np.arange(T)[None, :]
    L = np.asarray(lengths)[:, None]
    return np.where(t < L, L - 1 - t, t)


def _take_time(a, idx):
    return np.take_along_axis(a, idx[..., None], axis=1)


@dataclass
class ForwardResult:
    hidden: np.ndarray          # (B, T, 2H) top-layer output, zero at padded steps
    mask: np.ndarray            # (B, T) bool
    pooled: np.ndarray          # (B, 2H)
    outputs: np.ndarray         # (B, 2): columns are (x_c, x_r)
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def x_c(self) -> np.ndarray:
        return self.outputs[:, 0]

    @property
    def x_r(self) -> np.ndarray:
        return self.outputs[:, 1]


def forward(params, config: ModelConfig, X, mask, training: bool = False, rng=None) -> ForwardResult:
    """Encode a padded batch ``X`` (B, T, D) with validity ``mask`` (B, T).

    The backward direction starts at each item's last valid step, so padding
    never enters either recurrence. Dropout is applied to the outputs of every
    layer except the last, in training mode only.
    """
    dtype = params["head.w"].dtype
    X = np.asarray(X, dtype=dtype)
    mask = np.asarray(mask, dtype=bool)
    if X.ndim != 3 or X.shape[2] != config.input_dim:
        raise ValueError(f"expected X of shape (B, T, {config.input_dim}), got {X.shape}")
    lengths = lengths_from_mask(mask)
    B, T, _ = X.shape
    H = config.hidden_units
    rev = reverse_index(lengths, T)
    fmask = mask[..., None].astype(dtype)
    if training and config.dropout > 0 and rng is None:
        raise ValueError("training mode with dropout needs an rng")

    layer_caches = []
    inp = X * fmask
    for layer in range(config.num_layers):
        halves = []
        dir_caches = []
        for d in "fb":
            wx, wh = params[f"gru{layer}.{d}.wx"], params[f"gru{layer}.{d}.wh"]
            bx, bh = params[f"gru{layer}.{d}.bx"], params[f"gru{layer}.{d}.bh"]
            src = inp if d == "f" else _take_time(inp, rev)
            gx = (src.reshape(B * T, -1) @ wx + bx).reshape(B, T, 3 * H)
            scan = kernels.scan_forward(gx, wh, bh)
            h = scan[0][:, 1:]
            if d == "b":
                h = _take_time(h, rev)
            halves.append(h)
            dir_caches.append((src, scan))
        out = np.concatenate(halves, axis=2) * fmask
        drop = None
        if training and config.dropout > 0 and layer < config.num_layers - 1:
            keep = 1.0 - config.dropout
            drop = (rng.random(out.shape) < keep).astype(dtype) / dtype.type(keep)
            out = out * drop
        layer_caches.append((dir_caches, drop))
        inp = out

    v = params.get("att.v")
    pooled, pcache = pool_forward(inp, mask, config.pooling, v)
    outputs = pooled @ params["head.w"] + params["head.b"]
    cache = {"layers": layer_caches, "pool": pcache, "rev": rev, "fmask": fmask}
    return ForwardResult(inp, mask, pooled, outputs, cache)


def backward(params, config: ModelConfig, result: ForwardResult, d_outputs) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every parameter, given dL/d(outputs)."""
    dtype = params["head.w"].dtype
    d_outputs = np.asarray(d_outputs, dtype=dtype)
    H = config.hidden_units
    B, T, _ = result.hidden.shape
    cache = result.cache
    rev, fmask = cache["rev"], cache["fmask"]
    grads: dict[str, np.ndarray] = {}

    grads["head.w"] = result.pooled.T @ d_outputs
    grads["head.b"] = d_outputs.sum(axis=0)
    dz = d_outputs @ params["head.w"].T
    dO, dv = pool_backward(dz, result.hidden, result.mask, config.pooling, cache["pool"], params.get("att.v"))
    if dv is not None:
        grads["att.v"] = dv

    for layer in range(config.num_layers - 1, -1, -1):
        dir_caches, drop = cache["layers"][layer]
        if drop is not None:
            dO = dO * drop
        dO = dO * fmask
        d_inp = None
        for k, d in enumerate("fb"):
            src, scan = dir_caches[k]
            wx, wh = params[f"gru{layer}.{d}.wx"], params[f"gru{layer}.{d}.wh"]
            dh = dO[:, :, k * H:(k + 1) * H]
            if d == "b":
                dh = _take_time(dh, rev)
            dgx, dwh, dbh = kernels.scan_backward(dh, scan, wh)
            dgx2 = dgx.reshape(B * T, 3 * H)
            grads[f"gru{layer}.{d}.wx"] = src.reshape(B * T, -1).T @ dgx2
            grads[f"gru{layer}.{d}.wh"] = dwh
            grads[f"gru{layer}.{d}.bx"] = dgx2.sum(axis=0)
            grads[f"gru{layer}.{d}.bh"] = dbh
            dsrc = (dgx2 @ wx.T).reshape(B, T, -1)
            if d == "b":
                dsrc = _take_time(dsrc, rev)
            d_inp = dsrc if d_inp is None else d_inp + dsrc
        dO = d_inp
    return {k: grads[k].astype(dtype, copy=False) for k in params}


def predict(params, config: ModelConfig, X, mask) -> tuple[np.ndarray, np.ndarray]:
    """Evaluation-mode ``(x_c, x_r)`` for a padded batch."""
    res = forward(params, config, X, mask, training=False)
    return res.x_c.copy(), res.x_r.copy()
