"""Fused forward pass, autoregressive generation and latency measurement."""

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import CapacityError, InputError, ShapeError
from .fusion import compute_weights
from .model import _embed, check_tokens, final_logits, run_block


@dataclass
class GenParams:
    max_new_tokens: int = 32
    temperature: float = 0.0  # 0 means greedy
    seed: int = 0
    stop_tokens: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.max_new_tokens < 0:
            raise ValueError("max_new_tokens must be non-negative")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        self.stop_tokens = frozenset(int(t) for t in self.stop_tokens)

    @property
    def greedy(self):
        return self.temperature == 0


@dataclass
class LatencyReport:
    weight_compute_ms_per_adapter: float
    weight_compute_ms_per_query: float
    prefill_ms: float
    decode_ms_per_token: float
    k: int
    parallel: bool
    n_queries: int
    method: str = "kl"
    decoding: str = "greedy"
    kernel_backend: str = ""

    def to_dict(self):
        return asdict(self)


def _fused_terms(bound, alphas, layer, dtype):
    terms = {}
    for j, b in enumerate(bound):
        b.layer_terms(layer, dtype, alphas[layer, j], into=terms)
    return terms


def _check_weights(model, registry, weights):
    a = weights.alphas
    if a.shape != (model.config.n_layers, len(registry)):
        raise ShapeError(f"weights shape {a.shape} does not match "
                         f"({model.config.n_layers}, {len(registry)})")
    if list(weights.adapter_ids) != registry.ids:
        raise ShapeError(f"weights adapters {weights.adapter_ids} != registry {registry.ids}")


class FusedSession:
    """KV-cached decoding state for one fused activation stream."""

    def __init__(self, model, registry, weights, dtype=np.float32):
        _check_weights(model, registry, weights)
        self.model = model
        self.dtype = np.dtype(dtype)
        bound = registry.bind_all(model)
        self._terms = [_fused_terms(bound, weights.alphas, l, self.dtype)
                       for l in range(model.config.n_layers)]
        self.reset()

    def reset(self):
        self.caches = [{} for _ in range(self.model.config.n_layers)]
        self.length = 0

    def feed(self, tokens):
        """Append tokens to the context and return next-token logits (1-D)."""
        toks = check_tokens(self.model, tokens, offset=self.length)
        positions = np.arange(self.length, self.length + toks.size, dtype=np.int64)
        h = _embed(self.model, toks, self.dtype, offset=self.length)
        for l in range(self.model.config.n_layers):
            h = run_block(self.model, l, h, positions, self.dtype, self._terms[l], self.caches[l])
        self.length += toks.size
        return final_logits(self.model, h[-1:], self.dtype)[0]


def fused_forward(model, registry, weights, tokens, dtype=np.float64):
    """Next-token logits at the last position under per-layer weighted deltas.

    Every targeted linear layer in block l computes
    ``W x + sum_j alphas[l, j] * dW_j x`` with the delta applied as a
    low-rank product.
    """
    return FusedSession(model, registry, weights, dtype).feed(tokens)


def _pick(logits, params, rng):
    if params.greedy:
        return int(np.argmax(logits))  # first maximum, i.e. lowest id on ties
    z = np.asarray(logits, dtype=np.float64) / params.temperature
    p = np.exp(z - z.max())
    c = np.cumsum(p)
    idx = int(np.searchsorted(c, rng.random() * c[-1], side="right"))
    return min(idx, len(c) - 1)


def generate(model, registry, weights, prompt, params, recompute_every=None, reweigh=None):
    """Autoregressive fused decoding.  Returns the new tokens (stop token excluded).

    With ``recompute_every=T`` and a ``reweigh(context) -> FusionWeights``
    callable, weights are recomputed from the running context every T
    tokens and the cache is rebuilt.
    """
    prompt = list(check_tokens(model, prompt))
    if params.max_new_tokens == 0:
        return []
    need = len(prompt) + params.max_new_tokens - 1
    if need > model.config.max_seq_len:
        raise CapacityError(f"prompt ({len(prompt)}) + max_new_tokens ({params.max_new_tokens}) "
                            f"exceeds max_seq_len {model.config.max_seq_len}")
    if recompute_every is not None and (recompute_every < 1 or reweigh is None):
        raise InputError("recompute_every needs a positive interval and a reweigh callable")
    rng = np.random.default_rng(params.seed)
    session = FusedSession(model, registry, weights)
    logits = session.feed(prompt)
    out = []
    while True:
        tok = _pick(logits, params, rng)
        if tok in params.stop_tokens:
            break
        out.append(tok)
        if len(out) >= params.max_new_tokens:
            break
        if recompute_every and len(out) % recompute_every == 0:
            session = FusedSession(model, registry, reweigh(prompt + out))
            logits = session.feed(prompt + out)
        else:
            logits = session.feed([tok])
    return out


def bench_latency(model, registry, queries, parallel=False, method="kl",
                  granularity="last_token", max_new_tokens=8, centroids=None):
    """Time weight computation, prefill and decode over ``queries``.

    Decoding is greedy and ignores stop tokens so every query decodes
    exactly ``max_new_tokens`` tokens.  Returns ``(report, weights_list)``.
    """
    from . import kernels

    if not queries:
        raise InputError("bench needs at least one query")
    k = len(registry)
    weight_ms, prefill_ms, decode_ms, n_decoded = [], [], 0.0, 0
    all_weights = []
    for toks in queries:
        toks = list(check_tokens(model, toks))
        t0 = time.perf_counter()
        w, _ = compute_weights(model, registry, toks, method, granularity, parallel, centroids)
        weight_ms.append((time.perf_counter() - t0) * 1e3)
        all_weights.append(w)
        session = FusedSession(model, registry, w)
        t0 = time.perf_counter()
        logits = session.feed(toks)
        prefill_ms.append((time.perf_counter() - t0) * 1e3)
        room = model.config.max_seq_len - len(toks)
        steps = max(0, min(max_new_tokens, room + 1) - 1)
        t0 = time.perf_counter()
        for _ in range(steps):
            logits = session.feed([int(np.argmax(logits))])
        decode_ms += (time.perf_counter() - t0) * 1e3
        n_decoded += steps
    per_query = float(np.mean(weight_ms))
    report = LatencyReport(
        weight_compute_ms_per_adapter=per_query / k,
        weight_compute_ms_per_query=per_query,
        prefill_ms=float(np.mean(prefill_ms)),
        decode_ms_per_token=decode_ms / n_decoded if n_decoded else 0.0,
        k=k,
        parallel=bool(parallel),
        n_queries=len(queries),
        method=method,
        kernel_backend=kernels.backend(),
    )
    return report, all_weights
