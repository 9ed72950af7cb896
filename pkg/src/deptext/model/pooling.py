"""Masked pooling of a hidden sequence (B, T, H) to one vector per item."""
from __future__ import annotations

import numpy as np

POOLING_METHODS = ("time", "mean", "max", "attention")


class EmptySequenceError(ValueError):
    """A sequence with no valid steps reached a pooling or recurrence op."""


def _as_batch(O, mask):
    O = np.asarray(O)
    mask = np.asarray(mask, dtype=bool)
    squeeze = O.ndim == 2
    if squeeze:
        O, mask = O[None], mask[None]
    if mask.shape != O.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} does not match sequence shape {O.shape[:2]}")
    if not mask.any(axis=1).all():
        raise EmptySequenceError("sequence has no valid steps")
    return O, mask, squeeze


def attention_weights(O, mask, v):
    """Softmax over valid steps of ``O @ v``; zero at masked steps.

    Accepts a single sequence (T, H) or a batch (B, T, H).
    """
    O, mask, squeeze = _as_batch(O, mask)
    alpha = _attention(O, mask, np.asarray(v, dtype=O.dtype))
    return alpha[0] if squeeze else alpha


def _attention(O, mask, v):
    logits = O @ v
    logits = np.where(mask, logits, -np.inf)
    logits = logits - logits.max(axis=1, keepdims=True)
    e = np.where(mask, np.exp(logits), 0.0)
    return (e / e.sum(axis=1, keepdims=True)).astype(O.dtype)


def pool(O, mask, method: str, v=None):
    """Reduce ``O`` over its valid steps; see :func:`pool_forward`."""
    O, mask, squeeze = _as_batch(O, mask)
    z, _ = pool_forward(O, mask, method, v)
    return z[0] if squeeze else z


def pool_forward(O, mask, method: str, v=None):
    """Return ``(z, cache)`` for batched ``O`` (B, T, H) and boolean ``mask`` (B, T)."""
    lengths = mask.sum(axis=1)
    if method == "time":
        idx = lengths - 1
        z = O[np.arange(O.shape[0]), idx]
        return z, idx
    if method == "mean":
        z = np.where(mask[..., None], O, 0).sum(axis=1) / lengths[:, None].astype(O.dtype)
        return z.astype(O.dtype), lengths
    if method == "max":
        masked = np.where(mask[..., None], O, -np.inf)
        arg = masked.argmax(axis=1)
        z = np.take_along_axis(O, arg[:, None, :], axis=1)[:, 0]
        return z, arg
    if method == "attention":
        if v is None:
            raise ValueError("attention pooling needs the attention vector v")
        alpha = _attention(O, mask, v)
        z = np.einsum("bt,bth->bh", alpha, O)
        return z, alpha
    raise ValueError(f"unknown pooling method {method!r}; expected one of {POOLING_METHODS}")


def pool_backward(dz, O, mask, method: str, cache, v=None):
    """Return ``(dO, dv)``; ``dv`` is ``None`` unless method is attention."""
    B, T, H = O.shape
    dO = np.zeros_like(O)
    if method == "time":
        dO[np.arange(B), cache] = dz
        return dO, None
    if method == "mean":
        dO[:] = dz[:, None, :] / cache[:, None, None].astype(O.dtype)
        dO *= mask[..., None]
        return dO, None
    if method == "max":
        b_idx, h_idx = np.meshgrid(np.arange(B), np.arange(H), indexing="ij")
        dO[b_idx, cache, h_idx] = dz
        return dO, None
    if method == "attention":
        alpha = cache
        dO += alpha[..., None] * dz[:, None, :]
        dalpha = np.einsum("bth,bh->bt", O, dz)
        ds = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
        dO += ds[..., None] * v[None, None, :]
        dv = np.einsum("bt,bth->h", ds, O)
        return dO, dv
    raise ValueError(f"unknown pooling method {method!r}")
