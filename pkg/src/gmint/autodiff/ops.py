"""Differentiable primitives.

Each function takes :class:`Tensor` operands, computes the forward value with
numpy and records a vector-Jacobian product on the operands' tape. Integer
inputs (token ids, class labels, masks) are plain arrays and never receive
gradients.
"""

from __future__ import annotations

import numpy as np

from .tape import DimensionError, Tensor

_MASK_BIAS = -1e9


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def identity(x: Tensor) -> Tensor:
    return x.tape.record(x.value.copy(), (x,), lambda g: (g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` for 2-D ``b`` and any leading batch axes on ``a``."""
    av, bv = a.value, b.value
    if bv.ndim != 2 or av.ndim < 1 or av.shape[-1] != bv.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {av.shape} by {bv.shape}")
    out = av @ bv

    def vjp(g):
        ga = g @ bv.T if a.requires_grad else None
        gb = av.reshape(-1, av.shape[-1]).T @ g.reshape(-1, g.shape[-1]) if b.requires_grad else None
        return ga, gb

    return a.tape.record(out, (a, b), vjp)


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.value + b.value
    except ValueError as exc:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} do not broadcast") from exc
    if out.shape != a.shape and out.shape != b.shape:
        raise DimensionError(f"add: result {out.shape} matches neither operand")
    sa, sb = a.shape, b.shape
    return a.tape.record(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def relu(x: Tensor) -> Tensor:
    mask = x.value > 0
    return x.tape.record(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    v = x.value
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return x.tape.record(out, (x,), lambda g: (g * out * (1.0 - out),))


def _softmax(v: np.ndarray, axis: int = -1) -> np.ndarray:
    z = np.exp(v - v.max(axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True)


def _log_softmax(v: np.ndarray) -> np.ndarray:
    shifted = v - v.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    out = _softmax(x.value)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return x.tape.record(out, (x,), vjp)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise DimensionError("embedding_lookup: ids must be integers")
    if table.value.ndim != 2:
        raise DimensionError(f"embedding_lookup: table must be 2-D, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise DimensionError(f"embedding_lookup: id out of range for table of {table.shape[0]} rows")
    out = table.value[ids]

    def vjp(g):
        gt = np.zeros_like(table.value)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    return table.tape.record(out, (table,), vjp)


def mean_pool(x: Tensor, mask=None) -> Tensor:
    """Average ``[B, L, E]`` over L, counting only positions where ``mask`` is 1.

    Rows whose mask is all zero pool to the zero vector.
    """
    v = x.value
    if v.ndim != 3:
        raise DimensionError(f"mean_pool: expected [B, L, E], got {v.shape}")
    if mask is None:
        mask = np.ones(v.shape[:2])
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != v.shape[:2]:
        raise DimensionError(f"mean_pool: mask {mask.shape} does not match {v.shape[:2]}")
    weights = mask / np.maximum(mask.sum(axis=1, keepdims=True), 1.0)
    out = np.einsum("bl,ble->be", weights, v)
    return x.tape.record(out, (x,), lambda g: (weights[:, :, None] * g[:, None, :],))


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    v = x.value
    n = v.shape[-1]
    if gamma.shape != (n,) or beta.shape != (n,):
        raise DimensionError(f"layer_norm: gamma/beta must be [{n}], got {gamma.shape}, {beta.shape}")
    mu = v.mean(axis=-1, keepdims=True)
    xc = v - mu
    inv = 1.0 / np.sqrt((xc**2).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gamma.value + beta.value

    def vjp(g):
        gx_hat = g * gamma.value
        gx = inv * (
            gx_hat
            - gx_hat.mean(axis=-1, keepdims=True)
            - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True)
        )
        lead = g.reshape(-1, n)
        return gx, (lead * xhat.reshape(-1, n)).sum(axis=0), lead.sum(axis=0)

    return x.tape.record(out, (x, gamma, beta), vjp)


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor, num_heads: int = 1, key_mask=None) -> Tensor:
    """Multi-head scaled dot-product attention over ``[B, L, E]`` operands.

    ``key_mask`` (``[B, L]``, 1 = attend) hides padding keys. Heads split E
    into ``num_heads`` contiguous slices.
    """
    qv, kv, vv = q.value, k.value, v.value
    if qv.ndim != 3 or qv.shape != kv.shape or kv.shape != vv.shape:
        raise DimensionError(f"attention: q/k/v shapes differ: {qv.shape}, {kv.shape}, {vv.shape}")
    b, length, e = qv.shape
    if e % num_heads:
        raise DimensionError(f"attention: width {e} not divisible by {num_heads} heads")
    d = e // num_heads
    scale = 1.0 / np.sqrt(d)

    def split(a):
        return a.reshape(b, length, num_heads, d).transpose(0, 2, 1, 3)

    def merge(a):
        return a.transpose(0, 2, 1, 3).reshape(b, length, e)

    qh, kh, vh = split(qv), split(kv), split(vv)
    scores = qh @ kh.transpose(0, 1, 3, 2) * scale
    if key_mask is not None:
        key_mask = np.asarray(key_mask, dtype=np.float64)
        if key_mask.shape != (b, length):
            raise DimensionError(f"attention: key_mask {key_mask.shape} != {(b, length)}")
        scores = scores + np.where(key_mask > 0, 0.0, _MASK_BIAS)[:, None, None, :]
    attn = _softmax(scores)
    out = merge(attn @ vh)

    def vjp(g):
        gh = split(g)
        gv = attn.transpose(0, 1, 3, 2) @ gh
        ga = gh @ vh.transpose(0, 1, 3, 2)
        gs = attn * (ga - (ga * attn).sum(axis=-1, keepdims=True))
        gq = gs @ kh * scale
        gk = gs.transpose(0, 1, 3, 2) @ qh * scale
        return merge(gq), merge(gk), merge(gv)

    return q.tape.record(out, (q, k, v), vjp)


def binary_cross_entropy(x: Tensor, targets, from_logits: bool = False) -> Tensor:
    """Mean binary cross-entropy; ``x`` holds probabilities unless ``from_logits``."""
    y = np.asarray(targets, dtype=np.float64).reshape(x.shape)
    v = x.value
    if from_logits:
        # log(1 + exp(-|v|)) form keeps large logits finite
        per = np.maximum(v, 0.0) - v * y + np.log1p(np.exp(-np.abs(v)))
        e = np.exp(-np.abs(v))
        local = np.where(v >= 0, 1.0, e) / (1.0 + e) - y
    else:
        if np.any(((v <= 0) & (y > 0)) | ((v >= 1) & (y < 1))) or np.any((v < 0) | (v > 1)):
            raise FloatingPointError("binary_cross_entropy: probability outside (0, 1) for its target")
        with np.errstate(divide="ignore", invalid="ignore"):
            per = -(np.where(y > 0, y * np.log(v), 0.0) + np.where(y < 1, (1 - y) * np.log1p(-v), 0.0))
            local = np.where(y > 0, -y / v, 0.0) + np.where(y < 1, (1 - y) / (1 - v), 0.0)
    n = v.size
    loss = np.array([per.sum() / n])
    return x.tape.record(loss, (x,), lambda g: (g[0] * local / n,))


def categorical_cross_entropy(x: Tensor, labels, from_logits: bool = False) -> Tensor:
    """Mean cross-entropy of ``[B, C]`` rows against integer labels or one-hot rows."""
    v = x.value
    if v.ndim != 2:
        raise DimensionError(f"categorical_cross_entropy: expected [B, C], got {v.shape}")
    labels = np.asarray(labels)
    if labels.ndim == 2:
        if labels.shape != v.shape:
            raise DimensionError(f"categorical_cross_entropy: one-hot {labels.shape} != {v.shape}")
        y = labels.astype(np.float64)
    else:
        if labels.shape != (v.shape[0],):
            raise DimensionError(f"categorical_cross_entropy: {labels.shape[0]} labels for {v.shape[0]} rows")
        if labels.size and (labels.min() < 0 or labels.max() >= v.shape[1]):
            raise DimensionError("categorical_cross_entropy: label out of range")
        y = np.zeros_like(v)
        y[np.arange(v.shape[0]), labels] = 1.0
    b = v.shape[0]
    if from_logits:
        logp = _log_softmax(v)
        local = np.exp(logp) * y.sum(axis=1, keepdims=True) - y
    else:
        with np.errstate(divide="ignore"):
            logp = np.where(y > 0, np.log(v), 0.0)
        if np.any(np.isinf(logp)):
            raise FloatingPointError("categorical_cross_entropy: zero probability on a target class")
        local = np.where(y > 0, -y / np.where(y > 0, v, 1.0), 0.0)
    loss = np.array([-(y * logp).sum() / b])
    return x.tape.record(loss, (x,), lambda g: (g[0] * local / b,))
