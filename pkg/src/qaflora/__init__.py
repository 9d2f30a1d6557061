"""Query-adaptive, training-free LoRA fusion.

Per query and per layer, each adapter's relevance is scored by the KL
divergence between logit-lens distributions of the base model and the
adapter-augmented model; the normalised scores weight the adapters' deltas
in a fused forward pass.
"""

__version__ = "0.1.0"

from .adapter import AdapterRegistry, LoraAdapter, LoraLayer, bind, delta_matrix, rank_sweep_check
from .fusion import (
    CentroidSet,
    DivergenceProfile,
    FusionWeights,
    build_centroids,
    centroid_weights,
    compute_weights,
    divergence_profile,
    mean_profile,
    qa_flora_weights,
    static_weights,
)
from .generation import GenParams, LatencyReport, bench_latency, fused_forward, generate
from .model import BaseModel, LayerTrace, ModelConfig, embed, forward_capture, logit_lens
from .toy import make_toy_adapter, make_toy_model

__all__ = [
    "AdapterRegistry", "BaseModel", "CentroidSet", "DivergenceProfile", "FusionWeights",
    "GenParams", "LatencyReport", "LayerTrace", "LoraAdapter", "LoraLayer", "ModelConfig",
    "bench_latency", "bind", "build_centroids", "centroid_weights", "compute_weights",
    "delta_matrix", "divergence_profile", "embed", "forward_capture", "fused_forward",
    "generate", "logit_lens", "make_toy_adapter", "make_toy_model", "mean_profile",
    "qa_flora_weights", "rank_sweep_check", "static_weights",
]
