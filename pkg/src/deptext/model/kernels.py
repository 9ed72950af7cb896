"""GRU recurrence kernels.

The input projection ``gx = x @ Wx + bx`` is a single large matmul done by the
caller; these kernels only run the sequential part. Gate layout along the last
axis of ``gx``/``Wh``/``bh`` is ``[reset | update | candidate]``.

    r  = sigmoid(gx_r + h @ Wh_r + bh_r)
    z  = sigmoid(gx_z + h @ Wh_z + bh_z)
    n  = tanh(gx_n + r * (h @ Wh_n + bh_n))
    h' = (1 - z) * n + z * h

Each kernel exists twice: a numba loop version and a vectorised numpy version.
"""
from __future__ import annotations

import math

import numpy as np

from .._accel import USE_NUMBA, njit


@njit
def _scan_forward_nb(gx, wh, bh):
    B, T, G = gx.shape
    H = G // 3
    hs = np.zeros((B, T + 1, H), dtype=gx.dtype)
    r = np.empty((B, T, H), dtype=gx.dtype)
    z = np.empty((B, T, H), dtype=gx.dtype)
    n = np.empty((B, T, H), dtype=gx.dtype)
    ghn = np.empty((B, T, H), dtype=gx.dtype)
    h = np.zeros((B, H), dtype=gx.dtype)
    # typed constants keep float32 inputs in single precision
    one = gx.dtype.type(1.0)
    two = gx.dtype.type(2.0)
    for t in range(T):
        gh = np.dot(h, wh)
        for b in range(B):
            for j in range(H):
                ar = gx[b, t, j] + gh[b, j] + bh[j]
                az = gx[b, t, H + j] + gh[b, H + j] + bh[H + j]
                hn = gh[b, 2 * H + j] + bh[2 * H + j]
                rv = one / (one + math.exp(-ar))
                zv = one / (one + math.exp(-az))
                an = gx[b, t, 2 * H + j] + rv * hn
                # tanh(a) = 2 sigmoid(2a) - 1; exp overflow to inf still yields -1
                nv = two / (one + math.exp(-two * an)) - one
                hv = (one - zv) * nv + zv * h[b, j]
                r[b, t, j] = rv
                z[b, t, j] = zv
                n[b, t, j] = nv
                ghn[b, t, j] = hn
                h[b, j] = hv
                hs[b, t + 1, j] = hv
    return hs, r, z, n, ghn


@njit
def _scan_backward_nb(dh_out, hs, r, z, n, ghn, wh):
    B, T, H = dh_out.shape
    dgx = np.empty((B, T, 3 * H), dtype=dh_out.dtype)
    dwh = np.zeros((H, 3 * H), dtype=dh_out.dtype)
    dbh = np.zeros(3 * H, dtype=dh_out.dtype)
    dgh = np.empty((B, 3 * H), dtype=dh_out.dtype)
    dh = np.zeros((B, H), dtype=dh_out.dtype)
    wh_t = np.ascontiguousarray(wh.T)
    one = dh_out.dtype.type(1.0)
    for t in range(T - 1, -1, -1):
        for b in range(B):
            for j in range(H):
                g = dh[b, j] + dh_out[b, t, j]
                rv = r[b, t, j]
                zv = z[b, t, j]
                nv = n[b, t, j]
                hp = hs[b, t, j]
                dn = g * (one - zv)
                dz = g * (hp - nv)
                dan = dn * (one - nv * nv)
                dr = dan * ghn[b, t, j]
                dar = dr * rv * (one - rv)
                daz = dz * zv * (one - zv)
                dgx[b, t, j] = dar
                dgx[b, t, H + j] = daz
                dgx[b, t, 2 * H + j] = dan
                dgh[b, j] = dar
                dgh[b, H + j] = daz
                dgh[b, 2 * H + j] = dan * rv
                dh[b, j] = g * zv
        hprev = np.ascontiguousarray(hs[:, t, :])
        dwh += np.dot(hprev.T, dgh)
        for k in range(3 * H):
            acc = dh_out.dtype.type(0.0)
            for b in range(B):
                acc += dgh[b, k]
            dbh[k] += acc
        dh += np.dot(dgh, wh_t)
    return dgx, dwh, dbh


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _scan_forward_np(gx, wh, bh):
    B, T, G = gx.shape
    H = G // 3
    hs = np.zeros((B, T + 1, H), dtype=gx.dtype)
    r = np.empty((B, T, H), dtype=gx.dtype)
    z = np.empty((B, T, H), dtype=gx.dtype)
    n = np.empty((B, T, H), dtype=gx.dtype)
    ghn = np.empty((B, T, H), dtype=gx.dtype)
    h = hs[:, 0]
    for t in range(T):
        gh = h @ wh + bh
        r[:, t] = _sigmoid(gx[:, t, :H] + gh[:, :H])
        z[:, t] = _sigmoid(gx[:, t, H:2 * H] + gh[:, H:2 * H])
        ghn[:, t] = gh[:, 2 * H:]
        n[:, t] = np.tanh(gx[:, t, 2 * H:] + r[:, t] * ghn[:, t])
        h = (1.0 - z[:, t]) * n[:, t] + z[:, t] * h
        hs[:, t + 1] = h
    return hs, r, z, n, ghn


def _scan_backward_np(dh_out, hs, r, z, n, ghn, wh):
    B, T, H = dh_out.shape
    dgx = np.empty((B, T, 3 * H), dtype=dh_out.dtype)
    dwh = np.zeros((H, 3 * H), dtype=dh_out.dtype)
    dh = np.zeros((B, H), dtype=dh_out.dtype)
    for t in range(T - 1, -1, -1):
        g = dh + dh_out[:, t]
        zt, nt, rt = z[:, t], n[:, t], r[:, t]
        dan = g * (1.0 - zt) * (1.0 - nt * nt)
        dgx[:, t, :H] = dan * ghn[:, t] * rt * (1.0 - rt)
        dgx[:, t, H:2 * H] = g * (hs[:, t] - nt) * zt * (1.0 - zt)
        dgx[:, t, 2 * H:] = dan
        dgh = dgx[:, t].copy()
        dgh[:, 2 * H:] *= rt
        dwh += hs[:, t].T @ dgh
        dh = g * zt + dgh @ wh.T
    dbh = dgx.sum(axis=(0, 1))
    # dgx's candidate block is d(gx_n); the recurrent bias sees r * that
    dbh[2 * H:] = np.einsum("bth,bth->h", dgx[:, :, 2 * H:], r)
    return dgx, dwh, dbh


def scan_forward(gx, wh, bh, backend: str | None = None):
    """Run the recurrence over ``gx`` (B, T, 3H) from a zero initial state.

    Returns ``(hs, r, z, n, ghn)`` where ``hs`` is (B, T+1, H) with the zero
    initial state at index 0.
    """
    use_nb = USE_NUMBA if backend is None else backend == "numba"
    gx = np.ascontiguousarray(gx)
    wh = np.ascontiguousarray(wh, dtype=gx.dtype)
    bh = np.ascontiguousarray(bh, dtype=gx.dtype)
    if use_nb:
        return _scan_forward_nb(gx, wh, bh)
    return _scan_forward_np(gx, wh, bh)


def scan_backward(dh_out, cache, wh, backend: str | None = None):
    """Backpropagate ``dh_out`` (B, T, H) through a recorded scan.

    Returns ``(dgx, dwh, dbh)``.
    """
    use_nb = USE_NUMBA if backend is None else backend == "numba"
    hs, r, z, n, ghn = cache
    dh_out = np.ascontiguousarray(dh_out, dtype=hs.dtype)
    wh = np.ascontiguousarray(wh, dtype=hs.dtype)
    if use_nb:
        return _scan_backward_nb(dh_out, hs, r, z, n, ghn, wh)
    return _scan_backward_np(dh_out, hs, r, z, n, ghn, wh)
