"""LoRA adapters: factor storage, dense deltas, binding and the registry."""

from dataclasses import dataclass, field

import numpy as np

from .errors import AdapterBindingError, ShapeError


@dataclass(frozen=True)
class LoraLayer:
    """Low-rank update for one linear layer: ``dW = (scale / rank) * B @ A``.

    ``a`` is ``(rank, d_in)`` and ``b`` is ``(d_out, rank)``.
    """

    target: str
    a: np.ndarray
    b: np.ndarray
    scale: float

    def __post_init__(self):
        a = np.ascontiguousarray(self.a, dtype=np.float32)
        b = np.ascontiguousarray(self.b, dtype=np.float32)
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[1]:
            raise ShapeError(f"{self.target}: inconsistent factor shapes A{a.shape} B{b.shape}")

    @property
    def rank(self):
        return self.a.shape[0]

    @property
    def d_in(self):
        return self.a.shape[1]

    @property
    def d_out(self):
        return self.b.shape[0]

    @property
    def effective_scale(self):
        return float(self.scale) / self.rank


def delta_matrix(layer):
    """Dense ``(d_out, d_in)`` update in float64."""
    if layer.a.shape[0] != layer.b.shape[1]:
        raise ShapeError(f"{layer.target}: inconsistent factor shapes")
    return layer.effective_scale * (layer.b.astype(np.float64) @ layer.a.astype(np.float64))


@dataclass
class LoraAdapter:
    id: str
    layers: dict  # target -> LoraLayer
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if isinstance(self.layers, (list, tuple)):
            seen = {}
            for layer in self.layers:
                if layer.target in seen:
                    raise ValueError(f"adapter {self.id!r}: duplicate target {layer.target!r}")
                seen[layer.target] = layer
            self.layers = seen
        self._deltas = {}

    def delta(self, target):
        """Dense delta for ``target``, materialised once and cached."""
        hit = self._deltas.get(target)
        if hit is None:
            hit = self._deltas.setdefault(target, delta_matrix(self.layers[target]))
        return hit

    def ranks(self):
        return {t: l.rank for t, l in self.layers.items()}


class BoundAdapter:
    """An adapter validated against a model's linear layers.

    Holds factor copies per dtype so forward passes can fetch the low-rank
    terms for a layer without re-validating.
    """

    def __init__(self, adapter, by_layer):
        self.adapter = adapter
        self._by_layer = by_layer  # layer index -> list of (role, LoraLayer)
        self._cast = {}

    @property
    def id(self):
        return self.adapter.id

    def _factors(self, dtype):
        dtype = np.dtype(dtype)
        hit = self._cast.get(dtype)
        if hit is None:
            hit = {
                l: [(role, np.ascontiguousarray(ll.a, dtype=dtype),
                     np.ascontiguousarray(ll.b, dtype=dtype), ll.effective_scale)
                    for role, ll in entries]
                for l, entries in self._by_layer.items()
            }
            hit = self._cast.setdefault(dtype, hit)
        return hit

    def layer_terms(self, layer, dtype, coef=1.0, into=None):
        """``role -> [(coef, A, B, effective_scale)]`` for one block."""
        out = {} if into is None else into
        for role, a, b, eff in self._factors(dtype).get(layer, ()):
            out.setdefault(role, []).append((float(coef), a, b, eff))
        return out


def bind(adapter, model):
    """Validate ``adapter`` against ``model`` and return a BoundAdapter."""
    shapes = model.linear_shapes()
    problems = {}
    by_layer = {}
    for target, layer in adapter.layers.items():
        if target not in shapes:
            problems[target] = "unknown target"
            continue
        d_out, d_in = shapes[target]
        if (layer.d_out, layer.d_in) != (d_out, d_in):
            problems[target] = (f"shape mismatch: expected (d_out, d_in)=({d_out}, {d_in}), "
                                f"got ({layer.d_out}, {layer.d_in})")
            continue
        idx, role = target.split(".")[1:]
        by_layer.setdefault(int(idx), []).append((role, layer))
    if problems:
        raise AdapterBindingError(problems)
    for entries in by_layer.values():
        entries.sort(key=lambda e: e[0])
    return BoundAdapter(adapter, by_layer)


@dataclass
class RankReport:
    adapter_ranks: dict  # adapter id -> {target: rank}
    valid: bool
    problems: list

    def distinct_ranks(self):
        return sorted({r for ranks in self.adapter_ranks.values() for r in ranks.values()})


def rank_sweep_check(adapters):
    """Per-layer rank listing for one adapter or an iterable of them.

    Any positive rank is accepted and adapters of different ranks may sit
    side by side; ``valid`` is False only for malformed factor shapes.
    """
    if isinstance(adapters, LoraAdapter):
        adapters = [adapters]
    ranks, problems = {}, []
    for ad in adapters:
        ranks[ad.id] = ad.ranks()
        for t, l in ad.layers.items():
            if l.rank < 1 or l.a.shape[0] != l.b.shape[1]:
                problems.append(f"{ad.id}:{t}")
    return RankReport(ranks, not problems, problems)


class AdapterRegistry:
    """Ordered adapter collection; position is the adapter index everywhere."""

    def __init__(self, adapters=()):
        self._adapters = []
        for ad in adapters:
            self.add(ad)
        self._bound = {}

    def add(self, adapter):
        if any(a.id == adapter.id for a in self._adapters):
            raise ValueError(f"duplicate adapter id {adapter.id!r}")
        self._adapters.append(adapter)
        self._bound = {}

    def __len__(self):
        return len(self._adapters)

    def __iter__(self):
        return iter(self._adapters)

    def __getitem__(self, i):
        return self._adapters[i]

    @property
    def ids(self):
        return [a.id for a in self._adapters]

    def index(self, adapter_id):
        return self.ids.index(adapter_id)

    def bind_all(self, model):
        """Bound handles in registry order (cached per model object)."""
        key = id(model)
        hit = self._bound.get(key)
        if hit is None or hit[0] is not model:
            hit = (model, [bind(a, model) for a in self._adapters])
            self._bound[key] = hit
        return hit[1]

    def rank_report(self):
        return rank_sweep_check(self._adapters)
