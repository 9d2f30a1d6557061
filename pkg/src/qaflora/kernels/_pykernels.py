"""Pure numpy versions of the compiled kernels (same signatures)."""

import numpy as np


def softmax_rows(x):
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=1, keepdims=True)


def kl_rows(p, q, floor):
    qf = np.maximum(q, floor)
    mask = p > 0.0
    safe_p = np.where(mask, p, 1.0)
    terms = np.where(mask, p * np.log(safe_p / qf), 0.0)
    return terms.sum(axis=1)


def rms_norm_rows(x, gain, eps):
    ms = np.mean(x.astype(np.float64) ** 2, axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(ms + eps)
    return (x * inv * gain).astype(x.dtype)


def silu_mul(gate, up):
    return gate / (1.0 + np.exp(-gate)) * up


def rope_rows(x, positions, n_heads, base):
    n, d = x.shape
    dh = d // n_heads
    half = dh // 2
    inv_freq = base ** (-2.0 * np.arange(half) / dh)
    theta = positions[:, None].astype(np.float64) * inv_freq[None, :]
    c = np.cos(theta)[:, None, :]
    s = np.sin(theta)[:, None, :]
    xh = x.reshape(n, n_heads, dh)
    x1 = xh[..., :half]
    x2 = xh[..., half:]
    out = np.concatenate([x1 * c - x2 * s, x1 * s + x2 * c], axis=-1)
    return out.reshape(n, d).astype(x.dtype)


def causal_attention(q, k, v, n_heads, q_offset):
    tq, d = q.shape
    tk = k.shape[0]
    dh = d // n_heads
    qh = q.reshape(tq, n_heads, dh).transpose(1, 0, 2)
    kh = k.reshape(tk, n_heads, dh).transpose(1, 0, 2)
    vh = v.reshape(tk, n_heads, dh).transpose(1, 0, 2)
    scores = (qh @ kh.transpose(0, 2, 1)) / np.sqrt(dh)
    allowed = np.arange(tk)[None, :] <= (q_offset + np.arange(tq))[:, None]
    scores = np.where(allowed[None], scores, -np.inf)
    scores = scores - scores.max(axis=-1, keepdims=True)
    w = np.exp(scores)
    w /= w.sum(axis=-1, keepdims=True)
    out = (w @ vh).transpose(1, 0, 2).reshape(tq, d)
    return np.ascontiguousarray(out, dtype=q.dtype)


def cosine_similarity(u, v):
    nu = np.sqrt(np.dot(u, u))
    nv = np.sqrt(np.dot(v, v))
    if nu == 0.0 or nv == 0.0:
        return float("nan")
    return float(np.dot(u, v) / (nu * nv))


def euclidean_distance(u, v):
    diff = u - v
    return float(np.sqrt(np.dot(diff, diff)))
