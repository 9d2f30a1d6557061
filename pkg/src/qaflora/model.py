"""Frozen pre-norm decoder-only transformer with capture-mode forward passes.

Architecture (LLaMA-style): token embedding (+ learned positions, or rotary
positions on q/k), N blocks of ``h + Attn(RMSNorm(h))`` then
``h + SwiGLU(RMSNorm(h))``, a final RMSNorm and an untied LM head.

All linear weights are stored float32 with shape ``(d_out, d_in)`` and are
read-only after construction.  Capture passes run in float64.
"""

from dataclasses import asdict, dataclass, fields

import numpy as np

from . import kernels as K
from .adapter import BoundAdapter, LoraAdapter, bind
from .errors import CapacityError, InputError, ShapeError, VocabularyError
from .tensor_math import softmax_rows

ATTN_ROLES = ("q_proj", "k_proj", "v_proj", "o_proj")
FFN_ROLES = ("gate_proj", "up_proj", "down_proj")
LINEAR_ROLES = ATTN_ROLES + FFN_ROLES

GRANULARITIES = ("last_token", "all_tokens")
STREAM_MODES = ("merged", "paper-literal")


def target_name(layer, role):
    return f"blocks.{layer}.{role}"


def parse_target(name):
    """Split ``blocks.<l>.<role>`` into ``(l, role)``; None if malformed."""
    parts = name.split(".")
    if len(parts) != 3 or parts[0] != "blocks" or not parts[1].isdigit():
        return None
    return int(parts[1]), parts[2]


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int
    d_model: int
    n_heads: int
    vocab_size: int
    max_seq_len: int
    norm_eps: float = 1e-5
    d_ff: int = 0
    positional: str = "rope"
    rope_base: float = 10000.0
    lens_apply_final_norm: bool = True

    def __post_init__(self):
        for name in ("n_layers", "d_model", "n_heads", "vocab_size", "max_seq_len"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be at least 2")
        if self.positional not in ("rope", "learned"):
            raise ValueError(f"unknown positional scheme {self.positional!r}")
        if self.positional == "rope" and self.head_dim % 2:
            raise ValueError("rotary positions need an even head dimension")
        if self.d_ff == 0:
            object.__setattr__(self, "d_ff", 4 * self.d_model)

    @property
    def head_dim(self):
        return self.d_model // self.n_heads

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass(frozen=True)
class Block:
    attn_norm: np.ndarray
    ffn_norm: np.ndarray
    linears: dict  # role -> (d_out, d_in)


def _freeze(a):
    a = np.ascontiguousarray(a, dtype=np.float32)
    a.setflags(write=False)
    return a


class BaseModel:
    """Immutable weights plus config.  Use ``from_tensors`` / ``tensors`` for IO."""

    def __init__(self, config, embedding, blocks, final_norm, lm_head, pos_embedding=None):
        self.config = config
        self.embedding = _freeze(embedding)
        self.pos_embedding = None if pos_embedding is None else _freeze(pos_embedding)
        self.blocks = tuple(
            Block(_freeze(b.attn_norm), _freeze(b.ffn_norm),
                  {r: _freeze(b.linears[r]) for r in LINEAR_ROLES})
            for b in blocks
        )
        self.final_norm = _freeze(final_norm)
        self.lm_head = _freeze(lm_head)
        self._cast_cache = {}
        self._check_shapes()

    def _check_shapes(self):
        c = self.config
        expect = {"embedding": (c.vocab_size, c.d_model), "final_norm": (c.d_model,),
                  "lm_head": (c.vocab_size, c.d_model)}
        if c.positional == "learned":
            expect["pos_embedding"] = (c.max_seq_len, c.d_model)
        elif self.pos_embedding is not None:
            raise ShapeError("pos_embedding given for a rotary-position model")
        for name, shape in expect.items():
            got = getattr(self, name)
            if got is None or got.shape != shape:
                raise ShapeError(f"{name}: expected {shape}, got {None if got is None else got.shape}")
        if len(self.blocks) != c.n_layers:
            raise ShapeError(f"expected {c.n_layers} blocks, got {len(self.blocks)}")
        shapes = self.linear_shapes()
        for i, b in enumerate(self.blocks):
            for norm in (b.attn_norm, b.ffn_norm):
                if norm.shape != (c.d_model,):
                    raise ShapeError(f"block {i} norm gain has shape {norm.shape}")
            for r in LINEAR_ROLES:
                if b.linears[r].shape != shapes[target_name(i, r)]:
                    raise ShapeError(f"{target_name(i, r)}: expected {shapes[target_name(i, r)]}, "
                                     f"got {b.linears[r].shape}")

    def linear_shapes(self):
        """Map of every LoRA-targetable linear layer name to ``(d_out, d_in)``."""
        d, f = self.config.d_model, self.config.d_ff
        role_shape = {"q_proj": (d, d), "k_proj": (d, d), "v_proj": (d, d), "o_proj": (d, d),
                      "gate_proj": (f, d), "up_proj": (f, d), "down_proj": (d, f)}
        return {target_name(l, r): role_shape[r]
                for l in range(self.config.n_layers) for r in LINEAR_ROLES}

    def linear_weight(self, target):
        l, role = parse_target(target)
        return self.blocks[l].linears[role]

    def tensors(self):
        """Ordered ``name -> float32 array`` view of every weight."""
        out = {"embedding": self.embedding}
        if self.pos_embedding is not None:
            out["pos_embedding"] = self.pos_embedding
        for i, b in enumerate(self.blocks):
            out[f"blocks.{i}.attn_norm"] = b.attn_norm
            out[f"blocks.{i}.ffn_norm"] = b.ffn_norm
            for r in LINEAR_ROLES:
                out[target_name(i, r)] = b.linears[r]
        out["final_norm"] = self.final_norm
        out["lm_head"] = self.lm_head
        return out

    @classmethod
    def from_tensors(cls, config, tensors):
        try:
            blocks = [
                Block(tensors[f"blocks.{i}.attn_norm"], tensors[f"blocks.{i}.ffn_norm"],
                      {r: tensors[target_name(i, r)] for r in LINEAR_ROLES})
                for i in range(config.n_layers)
            ]
            return cls(config, tensors["embedding"], blocks, tensors["final_norm"],
                       tensors["lm_head"], tensors.get("pos_embedding"))
        except KeyError as e:
            raise ShapeError(f"missing model tensor {e.args[0]!r}") from None

    def cast(self, dtype):
        """Weights converted to ``dtype`` (cached; float32 returns the originals)."""
        dtype = np.dtype(dtype)
        hit = self._cast_cache.get(dtype)
        if hit is None:
            hit = {k: np.ascontiguousarray(v, dtype=dtype) for k, v in self.tensors().items()}
            hit = self._cast_cache.setdefault(dtype, hit)
        return hit


@dataclass
class LayerTrace:
    """Post-block residual stream for every layer.

    ``hidden`` has shape ``(N, d_model)`` for ``last_token`` and
    ``(N, T, d_model)`` for ``all_tokens``.
    """

    hidden: np.ndarray
    granularity: str

    def __len__(self):
        return self.hidden.shape[0]

    def __getitem__(self, layer):
        return self.hidden[layer]


def check_tokens(model, tokens, offset=0):
    toks = np.asarray(tokens, dtype=np.int64).reshape(-1)
    if toks.size == 0:
        raise InputError("token sequence is empty")
    if offset + toks.size > model.config.max_seq_len:
        raise CapacityError(f"sequence length {offset + toks.size} exceeds "
                            f"max_seq_len {model.config.max_seq_len}")
    bad = toks[(toks < 0) | (toks >= model.config.vocab_size)]
    if bad.size:
        raise VocabularyError(f"token id {int(bad[0])} outside vocabulary of size "
                              f"{model.config.vocab_size}")
    return toks


def _embed(model, toks, dtype, offset=0):
    w = model.cast(dtype)
    x = w["embedding"][toks]
    if model.config.positional == "learned":
        x = x + w["pos_embedding"][offset:offset + toks.size]
    return np.ascontiguousarray(x)


def embed(model, tokens):
    """Input embeddings (float64), learned positions included when configured."""
    return _embed(model, check_tokens(model, tokens), np.float64)


def _linear(x, w, terms):
    y = x @ w.T
    for coef, a, b, eff in terms:
        if coef != 0.0:
            y = y + (coef * eff) * ((x @ a.T) @ b.T)
    return y


def run_block(model, layer, h, positions, dtype, terms=None, cache=None):
    """One transformer block on rows ``h``.

    ``terms`` maps role -> list of ``(coef, A, B, effective_scale)``.
    ``cache`` (optional dict with ``k``/``v``) is extended in place and used
    for keys/values of earlier positions.
    """
    cfg = model.config
    w = model.cast(dtype)
    terms = terms or {}
    pre = f"blocks.{layer}."

    def lin(x, role):
        return _linear(x, w[pre + role], terms.get(role, ()))

    a = K.rms_norm_rows(h, w[pre + "attn_norm"], cfg.norm_eps)
    q, k, v = lin(a, "q_proj"), lin(a, "k_proj"), lin(a, "v_proj")
    if cfg.positional == "rope":
        q = K.rope_rows(np.ascontiguousarray(q), positions, cfg.n_heads, cfg.rope_base)
        k = K.rope_rows(np.ascontiguousarray(k), positions, cfg.n_heads, cfg.rope_base)
    offset = int(positions[0])
    if cache is not None:
        if cache.get("k") is not None:
            k = np.concatenate([cache["k"], k])
            v = np.concatenate([cache["v"], v])
        cache["k"], cache["v"] = k, v
    att = K.causal_attention(np.ascontiguousarray(q), np.ascontiguousarray(k),
                             np.ascontiguousarray(v), cfg.n_heads, offset)
    h = h + lin(att, "o_proj")
    f = K.rms_norm_rows(np.ascontiguousarray(h), w[pre + "ffn_norm"], cfg.norm_eps)
    g = K.silu_mul(np.ascontiguousarray(lin(f, "gate_proj")), np.ascontiguousarray(lin(f, "up_proj")))
    return np.ascontiguousarray(h + lin(g, "down_proj"))


def final_logits(model, h, dtype):
    """Standard output head on rows ``h``: final RMSNorm then LM head."""
    w = model.cast(dtype)
    n = K.rms_norm_rows(np.ascontiguousarray(h), w["final_norm"], model.config.norm_eps)
    return n @ w["lm_head"].T


def _resolve(model, adapter):
    if adapter is None or isinstance(adapter, BoundAdapter):
        return adapter
    if isinstance(adapter, LoraAdapter):
        return bind(adapter, model)
    raise TypeError(f"expected LoraAdapter or BoundAdapter, got {type(adapter).__name__}")


def _layer_coefs(model, weights):
    n = model.config.n_layers
    if weights is None:
        return [1.0] * n
    c = [float(x) for x in np.asarray(weights, dtype=np.float64).reshape(-1)]
    if len(c) != n:
        raise ShapeError(f"expected {n} per-layer weights, got {len(c)}")
    if any(not (0.0 <= x <= 1.0) for x in c):
        raise ShapeError("per-layer weights must lie in [0, 1]")
    return c


def forward_capture(model, tokens, adapter=None, weights=None, granularity="last_token",
                    mode="merged", dtype=np.float64):
    """Run the model and record every block's residual-stream output.

    With ``adapter``, each targeted linear layer adds the adapter's low-rank
    update, scaled per layer by ``weights`` when given.  ``mode`` selects how
    the adapter stream is formed:

    ``merged``
        one forward where targeted layers compute ``W x + dW x`` on the
        adapter stream's own activations.
    ``paper-literal``
        ``h_A[l] = h_M[l] + (block_l with dW)(h_A[l-1]) - block_l(h_A[l-1])``,
        i.e. the adapter's block-level contribution on its own stream added
        to the base stream's output.
    """
    if granularity not in GRANULARITIES:
        raise ValueError(f"unknown granularity {granularity!r}")
    if mode not in STREAM_MODES:
        raise ValueError(f"unknown adapter stream mode {mode!r}")
    toks = check_tokens(model, tokens)
    bound = _resolve(model, adapter)
    coefs = _layer_coefs(model, weights) if bound is not None else None
    positions = np.arange(toks.size, dtype=np.int64)
    h = _embed(model, toks, dtype)
    out = np.empty((model.config.n_layers, toks.size, model.config.d_model), dtype=dtype)
    if bound is None or mode == "merged":
        for l in range(model.config.n_layers):
            terms = bound.layer_terms(l, dtype, coefs[l]) if bound is not None else None
            h = run_block(model, l, h, positions, dtype, terms)
            out[l] = h
    else:
        h_base = h
        for l in range(model.config.n_layers):
            h_next_base = run_block(model, l, h_base, positions, dtype)
            with_delta = run_block(model, l, h, positions, dtype, bound.layer_terms(l, dtype, coefs[l]))
            without = run_block(model, l, h, positions, dtype)
            h = h_next_base + (with_delta - without)
            h_base = h_next_base
            out[l] = h
    if granularity == "last_token":
        out = np.ascontiguousarray(out[:, -1, :])
    return LayerTrace(out, granularity)


def lens_rows(model, hidden):
    """Logit-lens distributions for rows of hidden states (float64)."""
    h = np.ascontiguousarray(np.atleast_2d(hidden), dtype=np.float64)
    if h.shape[-1] != model.config.d_model:
        raise ShapeError(f"hidden dim {h.shape[-1]} != d_model {model.config.d_model}")
    w = model.cast(np.float64)
    if model.config.lens_apply_final_norm:
        h = K.rms_norm_rows(h, w["final_norm"], model.config.norm_eps)
    return softmax_rows(h @ w["lm_head"].T)


def logit_lens(model, hidden):
    """Project one hidden state onto the vocabulary: norm, LM head, softmax."""
    hidden = np.asarray(hidden, dtype=np.float64)
    if hidden.ndim != 1:
        raise ShapeError("logit_lens expects a single hidden vector")
    return lens_rows(model, hidden)[0]


def next_token_distribution(model, tokens):
    """Ordinary next-token distribution of the base model (float64)."""
    toks = check_tokens(model, tokens)
    positions = np.arange(toks.size, dtype=np.int64)
    h = _embed(model, toks, np.float64)
    for l in range(model.config.n_layers):
        h = run_block(model, l, h, positions, np.float64)
    return softmax_rows(final_logits(model, h[-1:], np.float64))[0]
