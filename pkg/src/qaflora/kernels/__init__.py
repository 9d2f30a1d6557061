"""Kernel backend selection.

The compiled Cython module is used when it imports; otherwise the numpy
fallback is used.  Set ``QAFLORA_KERNELS=python`` to force the fallback.
``use_backend`` switches at runtime (tests and the kernel benchmark use it).
"""

import os
from contextlib import contextmanager

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

KERNEL_NAMES = (
    "softmax_rows",
    "kl_rows",
    "rms_norm_rows",
    "silu_mul",
    "rope_rows",
    "causal_attention",
    "cosine_similarity",
    "euclidean_distance",
)

_backends = {"python": _pykernels}
if _ckernels is not None:
    _backends["compiled"] = _ckernels

_active = None


def available_backends():
    return sorted(_backends)


def backend():
    """Name of the active backend."""
    return _active


def use_backend(name):
    global _active
    if name not in _backends:
        raise ValueError(f"kernel backend {name!r} unavailable; have {available_backends()}")
    mod = _backends[name]
    g = globals()
    for fn in KERNEL_NAMES:
        g[fn] = getattr(mod, fn)
    _active = name


@contextmanager
def backend_scope(name):
    prev = _active
    use_backend(name)
    try:
        yield
    finally:
        use_backend(prev)


_requested = os.environ.get("QAFLORA_KERNELS", "").strip().lower()
if _requested:
    use_backend(_requested)
else:
    use_backend("compiled" if _ckernels is not None else "python")
