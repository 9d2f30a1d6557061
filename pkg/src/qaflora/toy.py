"""Deterministic random models and adapters for tests and demos."""

import numpy as np

from .adapter import LoraAdapter, LoraLayer
from .model import LINEAR_ROLES, BaseModel, Block, ModelConfig, target_name


def make_toy_model(seed, config):
    """Random weights drawn from ``default_rng(seed)`` in a fixed order."""
    if isinstance(config, dict):
        config = ModelConfig.from_dict(config)
    rng = np.random.default_rng(seed)
    d, f, v = config.d_model, config.d_ff, config.vocab_size

    def mat(rows, cols):
        return rng.standard_normal((rows, cols)) / np.sqrt(cols)

    def gain():
        return 1.0 + 0.1 * rng.standard_normal(d)

    embedding = rng.standard_normal((v, d))
    pos = 0.1 * rng.standard_normal((config.max_seq_len, d)) if config.positional == "learned" else None
    shapes = {"q_proj": (d, d), "k_proj": (d, d), "v_proj": (d, d), "o_proj": (d, d),
              "gate_proj": (f, d), "up_proj": (f, d), "down_proj": (d, f)}
    blocks = []
    for _ in range(config.n_layers):
        attn_norm, ffn_norm = gain(), gain()
        blocks.append(Block(attn_norm, ffn_norm, {r: mat(*shapes[r]) for r in LINEAR_ROLES}))
    final_norm = gain()
    lm_head = mat(v, d)
    return BaseModel(config, embedding, blocks, final_norm, lm_head, pos)


def default_targets(model):
    return [target_name(l, r) for l in range(model.config.n_layers) for r in LINEAR_ROLES]


def make_toy_adapter(seed, model, rank=4, scale=None, targets=None, magnitude=1.0,
                     adapter_id=None):
    """Random LoRA factors for ``targets`` (default: every projection).

    ``magnitude`` multiplies the B factors, so the dense delta is linear in
    it and magnitude 0 gives exact zero deltas.  ``scale`` defaults to
    ``rank`` (effective scale 1).
    """
    if magnitude < 0:
        raise ValueError("magnitude must be non-negative")
    rng = np.random.default_rng(seed)
    scale = float(rank if scale is None else scale)
    shapes = model.linear_shapes()
    layers = []
    for t in targets or default_targets(model):
        d_out, d_in = shapes[t]
        a = rng.standard_normal((rank, d_in)) / np.sqrt(d_in)
        b = magnitude * rng.standard_normal((d_out, rank)) / np.sqrt(rank)
        layers.append(LoraLayer(t, a, b, scale))
    return LoraAdapter(adapter_id or f"toy-{seed}", layers,
                       {"seed": seed, "magnitude": magnitude, "generator": "toy"})
