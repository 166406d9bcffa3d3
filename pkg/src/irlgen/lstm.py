"""Single-layer LSTM used by both the generator and the reward encoder.

Weights live in a param store under ``{prefix}W_i``, ``W_f``, ``W_o``, ``W_c``
(each ``(D_in + D_hid) x D_hid``) and ``b_i`` ... ``b_c`` (``1 x D_hid``).
The cell input at each step is ``concat(x_t, h_{t-1})``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import ParamStore

GATES = ("i", "f", "o", "c")


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def init_lstm(params: ParamStore, prefix: str, d_in: int, d_hid: int, gen, scale: float = 0.08,
              forget_bias: float = 1.0) -> None:
    for g in GATES:
        params[f"{prefix}W_{g}"] = gen.uniform(-scale, scale, size=(d_in + d_hid, d_hid))
        params[f"{prefix}b_{g}"] = np.full((1, d_hid), forget_bias if g == "f" else 0.0)


def zero_lstm(params: ParamStore, prefix: str, d_in: int, d_hid: int) -> None:
    for g in GATES:
        params[f"{prefix}W_{g}"] = np.zeros((d_in + d_hid, d_hid))
        params[f"{prefix}b_{g}"] = np.zeros((1, d_hid))


def stacked(params: ParamStore, prefix: str):
    W = np.concatenate([params[f"{prefix}W_{g}"] for g in GATES], axis=1)
    b = np.concatenate([params[f"{prefix}b_{g}"] for g in GATES], axis=1)
    return W, b


def step(W, b, x, h, c):
    """One cell update on a batch. ``x``: (B, D_in); ``h``, ``c``: (B, H)."""
    H = h.shape[1]
    z = np.concatenate([x, h], axis=1) @ W + b
    i = sigmoid(z[:, :H])
    f = sigmoid(z[:, H:2 * H])
    o = sigmoid(z[:, 2 * H:3 * H])
    g = np.tanh(z[:, 3 * H:])
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return h_new, c_new


@dataclass
class LstmCache:
    xs: np.ndarray  # (B, T, D_in)
    zs: np.ndarray  # (B, T, D_in + H) cell inputs
    gates: np.ndarray  # (B, T, 4H) post-activation
    cs: np.ndarray  # (B, T + 1, H), cs[:, 0] is the initial cell
    hs: np.ndarray  # (B, T + 1, H), hs[:, 0] is the initial hidden


def forward(params: ParamStore, prefix: str, xs: np.ndarray, h0=None, c0=None):
    """Run over a whole (B, T, D_in) input; returns (hs[:, 1:], cache)."""
    W, b = stacked(params, prefix)
    B, T, D = xs.shape
    H = W.shape[1] // 4
    hs = np.zeros((B, T + 1, H))
    cs = np.zeros((B, T + 1, H))
    if h0 is not None:
        hs[:, 0] = h0
    if c0 is not None:
        cs[:, 0] = c0
    zs = np.zeros((B, T, D + H))
    gates = np.zeros((B, T, 4 * H))
    for t in range(T):
        z_in = np.concatenate([xs[:, t], hs[:, t]], axis=1)
        a = z_in @ W + b
        i = sigmoid(a[:, :H])
        f = sigmoid(a[:, H:2 * H])
        o = sigmoid(a[:, 2 * H:3 * H])
        g = np.tanh(a[:, 3 * H:])
        cs[:, t + 1] = f * cs[:, t] + i * g
        hs[:, t + 1] = o * np.tanh(cs[:, t + 1])
        zs[:, t] = z_in
        gates[:, t] = np.concatenate([i, f, o, g], axis=1)
    return hs[:, 1:], LstmCache(xs=xs, zs=zs, gates=gates, cs=cs, hs=hs)


def backward(params: ParamStore, prefix: str, cache: LstmCache, dhs: np.ndarray):
    """BPTT given dL/dh_t for every step. Returns (grads, dxs)."""
    W, _ = stacked(params, prefix)
    B, T, D = cache.xs.shape
    H = W.shape[1] // 4
    dW = np.zeros_like(W)
    db = np.zeros((1, 4 * H))
    dxs = np.zeros_like(cache.xs)
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in reversed(range(T)):
        i = cache.gates[:, t, :H]
        f = cache.gates[:, t, H:2 * H]
        o = cache.gates[:, t, 2 * H:3 * H]
        g = cache.gates[:, t, 3 * H:]
        c = cache.cs[:, t + 1]
        c_prev = cache.cs[:, t]
        tc = np.tanh(c)
        dh = dhs[:, t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        da = np.concatenate([
            dc * g * i * (1.0 - i),
            dc * c_prev * f * (1.0 - f),
            dh * tc * o * (1.0 - o),
            dc * i * (1.0 - g * g),
        ], axis=1)
        dW += cache.zs[:, t].T @ da
        db += da.sum(axis=0, keepdims=True)
        dz = da @ W.T
        dxs[:, t] = dz[:, :D]
        dh_next = dz[:, D:]
        dc_next = dc * f
    grads = {}
    for n, g in enumerate(GATES):
        grads[f"{prefix}W_{g}"] = dW[:, n * H:(n + 1) * H].copy()
        grads[f"{prefix}b_{g}"] = db[:, n * H:(n + 1) * H].copy()
    return grads, dxs
