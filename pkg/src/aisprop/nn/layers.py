"""Differentiable building blocks with hand-written backward passes.

Every ``*_forward`` returns ``(output, cache)`` and the matching
``*_backward`` takes ``(cache, d_output)``.  Parameter gradients are
accumulated into the ``grads`` mapping passed in, keyed by parameter name.
Arrays are float64 throughout; shapes use B (batch), T (time), D/H (width).
"""

from __future__ import annotations

import math
from typing import MutableMapping

import numpy as np

Grads = MutableMapping[str, np.ndarray]

NEG_INF = -1e30


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# --- embedding / positions ------------------------------------------------


def embedding_forward(table: np.ndarray, ids: np.ndarray):
    return table[ids], ids


def embedding_backward(ids: np.ndarray, dx: np.ndarray, grads: Grads, name: str) -> None:
    g = grads[name]
    np.add.at(g, ids.ravel(), dx.reshape(-1, dx.shape[-1]))


def sinusoidal_positions(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(dim, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, (2.0 * (i // 2)) / dim)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


# --- dense ------------------------------------------------------------------


def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    return x @ w + b, x


def linear_backward(x: np.ndarray, dy: np.ndarray, w: np.ndarray, grads: Grads,
                    wname: str, bname: str) -> np.ndarray:
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    grads[wname] += x2.T @ dy2
    grads[bname] += dy2.sum(axis=0)
    return dy @ w.T


def layernorm_forward(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = 1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    return xhat * gamma + beta, (xhat, rstd, gamma)


def layernorm_backward(cache, dy: np.ndarray, grads: Grads, gname: str, bname: str) -> np.ndarray:
    xhat, rstd, gamma = cache
    axes = tuple(range(dy.ndim - 1))
    grads[gname] += (dy * xhat).sum(axis=axes)
    grads[bname] += dy.sum(axis=axes)
    dxhat = dy * gamma
    return rstd * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                   - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu_forward(x: np.ndarray):
    u = _GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(u)
    return 0.5 * x * (1.0 + t), (x, t)


def gelu_backward(cache, dy: np.ndarray) -> np.ndarray:
    x, t = cache
    du = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


def dropout_forward(x: np.ndarray, rate: float, rng: np.random.Generator | None):
    """Inverted dropout; identity when ``rng`` is None or ``rate`` is 0."""
    if rng is None or rate <= 0.0:
        return x, None
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * keep, keep


def dropout_backward(keep, dy: np.ndarray) -> np.ndarray:
    return dy if keep is None else dy * keep


# --- attention ----------------------------------------------------------------


def attention_forward(x: np.ndarray, mask: np.ndarray, p: dict, prefix: str, heads: int):
    """Multi-head self-attention; padded keys are excluded from every softmax."""
    B, T, H = x.shape
    dk = H // heads
    q = x @ p[f"{prefix}.Wq"] + p[f"{prefix}.bq"]
    k = x @ p[f"{prefix}.Wk"] + p[f"{prefix}.bk"]
    v = x @ p[f"{prefix}.Wv"] + p[f"{prefix}.bv"]

    def split(a):
        return a.reshape(B, T, heads, dk).transpose(0, 2, 1, 3)

    qh, kh, vh = split(q), split(k), split(v)
    scale = 1.0 / math.sqrt(dk)
    scores = (qh @ kh.transpose(0, 1, 3, 2)) * scale
    scores = np.where(mask[:, None, None, :] > 0, scores, NEG_INF)
    scores -= scores.max(axis=-1, keepdims=True)
    probs = np.exp(scores)
    probs /= probs.sum(axis=-1, keepdims=True)
    ctx = (probs @ vh).transpose(0, 2, 1, 3).reshape(B, T, H)
    out = ctx @ p[f"{prefix}.Wo"] + p[f"{prefix}.bo"]
    return out, (x, qh, kh, vh, probs, ctx, heads, scale)


def attention_backward(cache, dout: np.ndarray, p: dict, grads: Grads, prefix: str) -> np.ndarray:
    x, qh, kh, vh, probs, ctx, heads, scale = cache
    B, T, H = x.shape
    dk = H // heads
    dctx = linear_backward(ctx, dout, p[f"{prefix}.Wo"], grads, f"{prefix}.Wo", f"{prefix}.bo")
    dctx_h = dctx.reshape(B, T, heads, dk).transpose(0, 2, 1, 3)
    dprobs = dctx_h @ vh.transpose(0, 1, 3, 2)
    dvh = probs.transpose(0, 1, 3, 2) @ dctx_h
    dscores = probs * (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True)) * scale
    dqh = dscores @ kh
    dkh = dscores.transpose(0, 1, 3, 2) @ qh

    def merge(a):
        return a.transpose(0, 2, 1, 3).reshape(B, T, H)

    dx = linear_backward(x, merge(dqh), p[f"{prefix}.Wq"], grads, f"{prefix}.Wq", f"{prefix}.bq")
    dx += linear_backward(x, merge(dkh), p[f"{prefix}.Wk"], grads, f"{prefix}.Wk", f"{prefix}.bk")
    dx += linear_backward(x, merge(dvh), p[f"{prefix}.Wv"], grads, f"{prefix}.Wv", f"{prefix}.bv")
    return dx


# --- recurrence ---------------------------------------------------------------


def lstm_forward(x: np.ndarray, mask: np.ndarray, wx: np.ndarray, wh: np.ndarray, b: np.ndarray):
    """One LSTM direction over (B, T, D) input, gate order i, f, g, o.

    Where ``mask`` is 0 the state is carried through unchanged and the
    output is zero, so padded steps have no effect on real ones.
    """
    B, T, _ = x.shape
    hs = wh.shape[0]
    xw = x @ wx + b  # (B, T, 4h)
    h = np.zeros((B, hs))
    c = np.zeros((B, hs))
    out = np.zeros((B, T, hs))
    gates = np.empty((B, T, 4 * hs))
    cs = np.empty((B, T, hs))  # new cell candidate state (before masking)
    h_prev = np.empty((B, T, hs))
    c_prev = np.empty((B, T, hs))
    for t in range(T):
        m = mask[:, t, None]
        z = xw[:, t] + h @ wh
        i = sigmoid(z[:, :hs])
        f = sigmoid(z[:, hs:2 * hs])
        g = np.tanh(z[:, 2 * hs:3 * hs])
        o = sigmoid(z[:, 3 * hs:])
        c_new = f * c + i * g
        h_new = o * np.tanh(c_new)
        h_prev[:, t], c_prev[:, t] = h, c
        gates[:, t, :hs], gates[:, t, hs:2 * hs] = i, f
        gates[:, t, 2 * hs:3 * hs], gates[:, t, 3 * hs:] = g, o
        cs[:, t] = c_new
        c = m * c_new + (1.0 - m) * c
        h = m * h_new + (1.0 - m) * h
        out[:, t] = h * m
    return out, (x, mask, gates, cs, h_prev, c_prev)


def lstm_backward(cache, dout: np.ndarray, wx: np.ndarray, wh: np.ndarray, grads: Grads,
                  names: tuple[str, str, str]) -> np.ndarray:
    x, mask, gates, cs, h_prev, c_prev = cache
    B, T, _ = x.shape
    hs = wh.shape[0]
    dz_all = np.zeros((B, T, 4 * hs))
    dh = np.zeros((B, hs))
    dc = np.zeros((B, hs))
    whT = wh.T
    for t in range(T - 1, -1, -1):
        m = mask[:, t, None]
        dh = dh + dout[:, t] * m
        i = gates[:, t, :hs]
        f = gates[:, t, hs:2 * hs]
        g = gates[:, t, 2 * hs:3 * hs]
        o = gates[:, t, 3 * hs:]
        tc = np.tanh(cs[:, t])
        dh_new = m * dh
        dc_new = m * dc + dh_new * o * (1.0 - tc * tc)
        dz = dz_all[:, t]
        dz[:, :hs] = dc_new * g * i * (1.0 - i)
        dz[:, hs:2 * hs] = dc_new * c_prev[:, t] * f * (1.0 - f)
        dz[:, 2 * hs:3 * hs] = dc_new * i * (1.0 - g * g)
        dz[:, 3 * hs:] = dh_new * tc * o * (1.0 - o)
        dc = (1.0 - m) * dc + dc_new * f
        dh = (1.0 - m) * dh + dz @ whT
    wxn, whn, bn = names
    dz2 = dz_all.reshape(B * T, 4 * hs)
    grads[wxn] += x.reshape(B * T, -1).T @ dz2
    grads[whn] += h_prev.reshape(B * T, hs).T @ dz2
    grads[bn] += dz2.sum(axis=0)
    return dz_all @ wx.T


def bilstm_forward(x: np.ndarray, mask: np.ndarray, p: dict, prefix: str):
    fwd, cf = lstm_forward(x, mask, p[f"{prefix}.fw.Wx"], p[f"{prefix}.fw.Wh"], p[f"{prefix}.fw.b"])
    rev, cb = lstm_forward(x[:, ::-1], mask[:, ::-1],
                           p[f"{prefix}.bw.Wx"], p[f"{prefix}.bw.Wh"], p[f"{prefix}.bw.b"])
    out = np.concatenate([fwd, rev[:, ::-1]], axis=-1)
    return out, (cf, cb, fwd.shape[-1])


def bilstm_backward(cache, dout: np.ndarray, p: dict, grads: Grads, prefix: str) -> np.ndarray:
    cf, cb, hs = cache
    dx = lstm_backward(cf, dout[..., :hs], p[f"{prefix}.fw.Wx"], p[f"{prefix}.fw.Wh"], grads,
                       (f"{prefix}.fw.Wx", f"{prefix}.fw.Wh", f"{prefix}.fw.b"))
    drev = lstm_backward(cb, np.ascontiguousarray(dout[:, ::-1, hs:]), p[f"{prefix}.bw.Wx"],
                         p[f"{prefix}.bw.Wh"], grads,
                         (f"{prefix}.bw.Wx", f"{prefix}.bw.Wh", f"{prefix}.bw.b"))
    return dx + drev[:, ::-1]


# --- pooling ------------------------------------------------------------------


def pool_forward(x: np.ndarray, mask: np.ndarray, mode: str):
    if mode == "first":
        return x[:, 0], (x.shape, mode, None)
    weights = mask if mode == "sum" else mask / mask.sum(axis=1, keepdims=True)
    return np.einsum("bt,btd->bd", weights, x), (x.shape, mode, weights)


def pool_backward(cache, dy: np.ndarray) -> np.ndarray:
    shape, mode, weights = cache
    if mode == "first":
        dx = np.zeros(shape)
        dx[:, 0] = dy
        return dx
    return weights[:, :, None] * dy[:, None, :]
