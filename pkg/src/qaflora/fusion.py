"""Fusion-weight strategies.

* ``kl`` / ``cosine`` / ``euclidean``: per-layer divergence between the base
  model and each adapter, row-normalised into weights (query adaptive).
* ``static``: 1/k everywhere.
* ``centroid``: softmax over cosine similarity between the query embedding
  and per-adapter centroids, replicated across layers.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import tensor_math as tm
from .errors import DegenerateVectorError, InputError, ShapeError
from .model import GRANULARITIES, check_tokens, forward_capture, lens_rows

MEASURES = ("kl", "cosine", "euclidean")
POOLINGS = ("mean", "last_token")


@dataclass
class DivergenceProfile:
    query_id: str
    adapter_ids: list
    measure: str
    granularity: str
    values: np.ndarray  # (N, k)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.adapter_ids):
            raise ShapeError(f"profile values shape {self.values.shape} does not match "
                             f"{len(self.adapter_ids)} adapters")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ShapeError("profile values must be finite and non-negative")

    @property
    def n_layers(self):
        return self.values.shape[0]


@dataclass
class FusionWeights:
    adapter_ids: list
    alphas: np.ndarray  # (N, k), rows sum to 1
    method: str = "kl"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=np.float64)
        if self.alphas.ndim != 2 or self.alphas.shape[1] != len(self.adapter_ids):
            raise ShapeError(f"weights shape {self.alphas.shape} does not match "
                             f"{len(self.adapter_ids)} adapters")

    @property
    def n_layers(self):
        return self.alphas.shape[0]

    def check(self, tol=1e-9):
        """Raise ShapeError unless every row is a probability vector."""
        a = self.alphas
        if np.any(a < -tol) or np.any(a > 1 + tol):
            raise ShapeError("weights outside [0, 1]")
        bad = np.abs(a.sum(axis=1) - 1.0) > tol
        if np.any(bad):
            raise ShapeError(f"weight rows {np.flatnonzero(bad).tolist()} do not sum to 1")
        return self


@dataclass
class CentroidSet:
    adapter_ids: list
    centroids: np.ndarray  # (k, d_model)
    sample_counts: list
    pooling: str = "mean"

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        if self.centroids.ndim != 2 or self.centroids.shape[0] != len(self.adapter_ids):
            raise ShapeError("one centroid per adapter required")
        if any(int(c) < 1 for c in self.sample_counts):
            raise ShapeError("sample counts must be at least 1")


def thread_limit():
    """Fan-out cap for adapter scoring (``QAFLORA_THREADS`` or core count)."""
    env = os.environ.get("QAFLORA_THREADS", "").strip()
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _map_ordered(fn, items, parallel, max_workers=None):
    if not parallel or len(items) < 2:
        return [fn(x) for x in items]
    workers = min(len(items), max_workers or thread_limit())
    with ThreadPoolExecutor(max_workers=max(1, workers)) as ex:
        return list(ex.map(fn, items))


def _layer_scores(model, base, other, measure):
    """(N,) scores for one adapter; ``base``/``other`` are (N, P, d) hidden stacks."""
    n_layers, n_pos, d = base.shape
    if measure == "kl":
        p = lens_rows(model, base.reshape(-1, d))
        q = lens_rows(model, other.reshape(-1, d))
        per = tm.kl_rows(p, q).reshape(n_layers, n_pos)
    else:
        per = np.empty((n_layers, n_pos))
        for l in range(n_layers):
            for t in range(n_pos):
                if measure == "cosine":
                    try:
                        per[l, t] = tm.cosine_distance(base[l, t], other[l, t])
                    except DegenerateVectorError:
                        per[l, t] = 0.0
                else:
                    per[l, t] = tm.euclidean_distance(base[l, t], other[l, t])
    # KL can round a hair below zero for near-identical distributions
    return np.maximum(per.mean(axis=1), 0.0)


def divergence_profile(model, registry, tokens, measure="kl", granularity="last_token",
                       parallel=False, mode="merged", query_id="q0", max_workers=None):
    """Per-layer, per-adapter divergence for one query.

    One base capture plus one full-strength capture per adapter; columns
    follow registry order regardless of completion order.
    """
    if measure not in MEASURES:
        raise ValueError(f"unknown measure {measure!r}; expected one of {MEASURES}")
    if granularity not in GRANULARITIES:
        raise ValueError(f"unknown granularity {granularity!r}")
    if len(registry) == 0:
        raise InputError("registry is empty")
    toks = check_tokens(model, tokens)
    bound = registry.bind_all(model)

    def capture(b):
        h = forward_capture(model, toks, b, granularity=granularity, mode=mode).hidden
        return h[:, None, :] if granularity == "last_token" else h

    base = capture(None)
    cols = _map_ordered(lambda b: _layer_scores(model, base, capture(b), measure),
                        bound, parallel, max_workers)
    return DivergenceProfile(query_id, registry.ids, measure, granularity, np.stack(cols, axis=1))


def qa_flora_weights(profile, epsilon=tm.NORMALIZE_EPS):
    """Row-normalise divergences into fusion weights (uniform for degenerate rows)."""
    alphas = np.stack([tm.normalize_scores(row, epsilon) for row in profile.values])
    return FusionWeights(list(profile.adapter_ids), alphas, profile.measure,
                         {"granularity": profile.granularity, "query_id": profile.query_id})


def static_weights(n_layers, k, adapter_ids=None):
    if k < 1:
        raise ValueError("k must be at least 1")
    ids = list(adapter_ids) if adapter_ids is not None else [f"adapter{j}" for j in range(k)]
    return FusionWeights(ids, np.full((n_layers, k), 1.0 / k), "static")


def query_embedding(model, tokens, pooling="mean"):
    """Final-layer base hidden state, mean-pooled over positions or the last one."""
    if pooling not in POOLINGS:
        raise ValueError(f"unknown pooling {pooling!r}")
    h = forward_capture(model, tokens, granularity="all_tokens").hidden[-1]
    return h.mean(axis=0) if pooling == "mean" else h[-1].copy()


def build_centroids(model, registry, samples, pooling="mean"):
    """Mean query embedding of each adapter's representative samples."""
    missing = [a for a in registry.ids if not samples.get(a)]
    if missing:
        raise InputError(f"no samples for adapter(s) {missing}")
    cents, counts = [], []
    for aid in registry.ids:
        embs = [query_embedding(model, s, pooling) for s in samples[aid]]
        cents.append(np.mean(embs, axis=0))
        counts.append(len(embs))
    return CentroidSet(registry.ids, np.stack(cents), counts, pooling)


def centroid_similarities(model, centroids, tokens):
    e = query_embedding(model, tokens, centroids.pooling)
    if not np.any(e):
        raise DegenerateVectorError("query embedding has zero norm")
    return np.array([1.0 - tm.cosine_distance(e, c) if np.any(c) else 0.0
                     for c in centroids.centroids])


def centroid_weights(model, centroids, tokens, temperature=1.0):
    """Softmax(similarity / temperature), same row for every layer."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    sims = centroid_similarities(model, centroids, tokens)
    row = tm.softmax(sims / temperature)
    alphas = np.tile(row, (model.config.n_layers, 1))
    return FusionWeights(list(centroids.adapter_ids), alphas, "centroid",
                         {"similarities": sims.tolist(), "temperature": temperature})


def compute_weights(model, registry, tokens, method="kl", granularity="last_token",
                    parallel=False, centroids=None, temperature=1.0, epsilon=tm.NORMALIZE_EPS,
                    mode="merged", query_id="q0"):
    """Dispatch by method name.  Returns ``(weights, profile_or_None)``."""
    if method in ("euclid",):
        method = "euclidean"
    if method in MEASURES:
        prof = divergence_profile(model, registry, tokens, method, granularity, parallel, mode,
                                  query_id)
        return qa_flora_weights(prof, epsilon), prof
    if method == "static":
        check_tokens(model, tokens)
        return static_weights(model.config.n_layers, len(registry), registry.ids), None
    if method == "centroid":
        if centroids is None:
            raise InputError("centroid method requires a CentroidSet")
        if list(centroids.adapter_ids) != registry.ids:
            raise InputError(f"centroid adapters {centroids.adapter_ids} do not match registry "
                             f"{registry.ids}")
        return centroid_weights(model, centroids, tokens, temperature), None
    raise ValueError(f"unknown method {method!r}")


def mean_profile(profiles, normalize=True, epsilon=tm.NORMALIZE_EPS):
    """Average profiles over queries; optionally normalise each layer row to 1."""
    if not profiles:
        raise InputError("no profiles to average")
    first = profiles[0]
    for p in profiles[1:]:
        if p.adapter_ids != first.adapter_ids or p.values.shape != first.values.shape:
            raise ShapeError("profiles disagree on adapters or layer count")
    mean = np.mean([p.values for p in profiles], axis=0)
    if normalize:
        mean = np.stack([tm.normalize_scores(r, epsilon) for r in mean])
    return DivergenceProfile("mean", list(first.adapter_ids), first.measure, first.granularity, mean)
