"""Sequence regressor: embedding, encoder, masked pooling and a scalar head."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from aisprop.errors import ShapeMismatch, StaleCache
from aisprop.nn import layers as L
from aisprop.nn.config import Encoder, ModelConfig, Positional
from aisprop.nn.params import ParameterStore


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def _lstm_params(rng, prefix: str, d_in: int, hs: int) -> dict[str, np.ndarray]:
    out = {}
    for d in ("fw", "bw"):
        b = np.zeros(4 * hs)
        b[hs:2 * hs] = 1.0  # forget gate
        out[f"{prefix}.{d}.Wx"] = _xavier(rng, d_in, 4 * hs)
        out[f"{prefix}.{d}.Wh"] = _xavier(rng, hs, 4 * hs)
        out[f"{prefix}.{d}.b"] = b
    return out


def init_params(config: ModelConfig, vocab_size: int, seed: int | None = None) -> ParameterStore:
    """Seeded initialization; ``seed`` defaults to ``config.seed``."""
    c = config
    rng = np.random.default_rng(np.random.SeedSequence([c.seed if seed is None else seed, 0]))
    E, H = c.embed_dim, c.hidden_size
    p: dict[str, np.ndarray] = {"embed": rng.uniform(-0.1, 0.1, size=(vocab_size, E))}
    if c.encoder is Encoder.SELF_ATTENTION:
        if c.positional is Positional.LEARNED:
            p["pos"] = rng.uniform(-0.1, 0.1, size=(c.max_len, E))
        p["proj.W"], p["proj.b"] = _xavier(rng, E, H), np.zeros(H)
        for layer in range(c.num_layers):
            pre = f"blk{layer}"
            p[f"{pre}.ln1.g"], p[f"{pre}.ln1.b"] = np.ones(H), np.zeros(H)
            for nm in ("q", "k", "v", "o"):
                p[f"{pre}.att.W{nm}"] = _xavier(rng, H, H)
                p[f"{pre}.att.b{nm}"] = np.zeros(H)
            p[f"{pre}.ln2.g"], p[f"{pre}.ln2.b"] = np.ones(H), np.zeros(H)
            p[f"{pre}.ff1.W"], p[f"{pre}.ff1.b"] = _xavier(rng, H, 4 * H), np.zeros(4 * H)
            p[f"{pre}.ff2.W"], p[f"{pre}.ff2.b"] = _xavier(rng, 4 * H, H), np.zeros(H)
        p["lnf.g"], p["lnf.b"] = np.ones(H), np.zeros(H)
        if c.recurrent_head:
            p.update(_lstm_params(rng, "rnn0", H, H // 2))
        feat = H
    elif c.encoder is Encoder.BIRECURRENT:
        d_in = E
        for layer in range(c.num_layers):
            p.update(_lstm_params(rng, f"rnn{layer}", d_in, H // 2))
            d_in = 2 * (H // 2)
        feat = d_in
    else:
        feat = E
    if c.head_hidden:
        p["head.W1"], p["head.b1"] = _xavier(rng, feat, c.head_hidden), np.zeros(c.head_hidden)
        feat = c.head_hidden
    p["head.w"], p["head.b"] = _xavier(rng, feat, 1), np.zeros(1)
    return ParameterStore(p)


@dataclass
class ForwardCache:
    ids: np.ndarray
    lengths: np.ndarray
    ids_ref: np.ndarray
    lengths_ref: np.ndarray
    version: int
    steps: list = field(default_factory=list)
    mask: np.ndarray | None = None


def _validate(params: ParameterStore, config: ModelConfig, ids, lengths) -> tuple[np.ndarray, np.ndarray]:
    ids = np.asarray(ids)
    lengths = np.asarray(lengths)
    if ids.ndim != 2 or not np.issubdtype(ids.dtype, np.integer):
        raise ShapeMismatch(f"ids must be a 2-D integer matrix, got shape {ids.shape} dtype {ids.dtype}")
    B, T = ids.shape
    if lengths.shape != (B,):
        raise ShapeMismatch(f"lengths must have shape ({B},), got {lengths.shape}")
    if B == 0:
        raise ShapeMismatch("empty batch")
    if T > config.max_len:
        raise ShapeMismatch(f"sequence width {T} exceeds max_len {config.max_len}")
    if lengths.min() < 1 or lengths.max() > T:
        raise ShapeMismatch(f"lengths must lie in [1, {T}]")
    V = params["embed"].shape[0]
    if ids.min() < 0 or ids.max() >= V:
        raise ShapeMismatch(f"token ids must lie in [0, {V})")
    return ids, lengths


def forward(params: ParameterStore, config: ModelConfig, ids, lengths, *,
            train: bool = False, rng: np.random.Generator | None = None):
    """Predict one value per row.  Returns ``(predictions, cache)``.

    Positions at or beyond a row's length are masked everywhere, so trailing
    content never changes a prediction.  Dropout is applied only when
    ``train`` is set and ``rng`` is given.
    """
    ids_ref, lengths_ref = ids, lengths
    ids, lengths = _validate(params, config, ids, lengths)
    c = config
    T = int(lengths.max())
    x_ids = ids[:, :T]
    mask = (np.arange(T)[None, :] < lengths[:, None]).astype(np.float64)
    drop_rng = rng if train else None
    cache = ForwardCache(ids.copy(), lengths.copy(), ids_ref, lengths_ref, params.version, mask=mask)
    steps = cache.steps

    x, _ = L.embedding_forward(params["embed"], x_ids)
    steps.append(("embed", x_ids))

    if c.encoder is Encoder.BAG_OF_TOKENS:
        feat, pc = L.pool_forward(x, mask, "sum")
        steps.append(("pool", pc))
    else:
        x, keep = L.dropout_forward(x, c.dropout, drop_rng)
        steps.append(("dropout", keep))
        if c.encoder is Encoder.SELF_ATTENTION:
            # sqrt(d) scaling keeps token identity comparable to unit-amplitude positions
            scale = float(np.sqrt(c.embed_dim))
            x = x * scale
            steps.append(("scale", scale))
            if c.positional is Positional.LEARNED:
                x = x + params["pos"][:T]
                steps.append(("pos", T))
            else:
                x = x + L.sinusoidal_positions(T, c.embed_dim)
            x, lc = L.linear_forward(x, params["proj.W"], params["proj.b"])
            steps.append(("linear", ("proj.W", "proj.b", lc)))
            for layer in range(c.num_layers):
                pre = f"blk{layer}"
                h, c1 = L.layernorm_forward(x, params[f"{pre}.ln1.g"], params[f"{pre}.ln1.b"])
                a, ca = L.attention_forward(h, mask, params.values, f"{pre}.att", c.attention_heads)
                x = x + a
                h2, c2 = L.layernorm_forward(x, params[f"{pre}.ln2.g"], params[f"{pre}.ln2.b"])
                f1, cf1 = L.linear_forward(h2, params[f"{pre}.ff1.W"], params[f"{pre}.ff1.b"])
                g, cg = L.gelu_forward(f1)
                f2, cf2 = L.linear_forward(g, params[f"{pre}.ff2.W"], params[f"{pre}.ff2.b"])
                x = x + f2
                steps.append(("block", (pre, c1, ca, c2, cf1, cg, cf2)))
            x, cl = L.layernorm_forward(x, params["lnf.g"], params["lnf.b"])
            steps.append(("layernorm", ("lnf.g", "lnf.b", cl)))
            rnn_layers = 1 if c.recurrent_head else 0
        else:
            rnn_layers = c.num_layers
        for layer in range(rnn_layers):
            x, cr = L.bilstm_forward(x, mask, params.values, f"rnn{layer}")
            steps.append(("bilstm", (f"rnn{layer}", cr)))
        x, keep = L.dropout_forward(x, c.dropout, drop_rng)
        steps.append(("dropout", keep))
        feat, pc = L.pool_forward(x, mask, c.pooling.value)
        steps.append(("pool", pc))

    if c.head_hidden:
        z, lc = L.linear_forward(feat, params["head.W1"], params["head.b1"])
        feat = np.tanh(z)
        steps.append(("linear", ("head.W1", "head.b1", lc)))
        steps.append(("tanh", feat))
    out, lc = L.linear_forward(feat, params["head.w"], params["head.b"])
    steps.append(("linear", ("head.w", "head.b", lc)))
    return out[:, 0], cache


def backward(params: ParameterStore, cache: ForwardCache, dpred) -> dict[str, np.ndarray]:
    """Fill ``params.grads`` with d(loss)/d(param) given d(loss)/d(prediction).

    Raises:
        StaleCache: the parameters were updated, or the input arrays were
            modified in place, after the forward pass that built ``cache``.
    """
    if params.version != cache.version:
        raise StaleCache("parameters changed since forward; rerun forward first")
    if not (np.array_equal(cache.ids_ref, cache.ids) and np.array_equal(cache.lengths_ref, cache.lengths)):
        raise StaleCache("input arrays were modified since forward")
    dpred = np.asarray(dpred, dtype=np.float64)
    if dpred.shape != cache.lengths.shape:
        raise ShapeMismatch(f"loss gradient has shape {dpred.shape}, expected {cache.lengths.shape}")
    params.zero_grad()
    grads = params.grads
    p = params.values
    d = dpred[:, None]
    for kind, data in reversed(cache.steps):
        if kind == "linear":
            wn, bn, lc = data
            d = L.linear_backward(lc, d, p[wn], grads, wn, bn)
        elif kind == "tanh":
            d = d * (1.0 - data * data)
        elif kind == "pool":
            d = L.pool_backward(data, d)
        elif kind == "dropout":
            d = L.dropout_backward(data, d)
        elif kind == "bilstm":
            prefix, cr = data
            d = L.bilstm_backward(cr, d, p, grads, prefix)
        elif kind == "layernorm":
            gn, bn, cl = data
            d = L.layernorm_backward(cl, d, grads, gn, bn)
        elif kind == "block":
            pre, c1, ca, c2, cf1, cg, cf2 = data
            dg = L.linear_backward(cf2, d, p[f"{pre}.ff2.W"], grads, f"{pre}.ff2.W", f"{pre}.ff2.b")
            df1 = L.gelu_backward(cg, dg)
            dh2 = L.linear_backward(cf1, df1, p[f"{pre}.ff1.W"], grads, f"{pre}.ff1.W", f"{pre}.ff1.b")
            d = d + L.layernorm_backward(c2, dh2, grads, f"{pre}.ln2.g", f"{pre}.ln2.b")
            dh = L.attention_backward(ca, d, p, grads, f"{pre}.att")
            d = d + L.layernorm_backward(c1, dh, grads, f"{pre}.ln1.g", f"{pre}.ln1.b")
        elif kind == "scale":
            d = d * data
        elif kind == "pos":
            grads["pos"][:data] += d.sum(axis=0)
        elif kind == "embed":
            L.embedding_backward(data, d, grads, "embed")
        else:  # pragma: no cover
            raise AssertionError(kind)
    return grads


def predict(params: ParameterStore, config: ModelConfig, ids: np.ndarray, lengths: np.ndarray,
            batch_size: int = 256) -> np.ndarray:
    """Eval-mode predictions in fixed chunks of ``batch_size`` rows."""
    out = np.empty(len(lengths))
    for start in range(0, len(lengths), batch_size):
        sl = slice(start, start + batch_size)
        out[sl], _ = forward(params, config, ids[sl], lengths[sl])
    return out
