"""Dense kernels and the scalar divergence / distance measures.

Vectors, matrices and distributions are plain numpy arrays (1-D, 2-D, 1-D).
Everything here computes in float64 regardless of the input dtype.
"""

import numpy as np

from . import kernels as K
from .errors import ContractError, DegenerateVectorError, NumericError, ShapeError

KL_FLOOR = 1e-10
NORMALIZE_EPS = 1e-8


def _vec(x, name):
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {a.shape}")
    return a


def _same_dim(u, v):
    if u.shape != v.shape:
        raise ShapeError(f"dimension mismatch: {u.shape[0]} vs {v.shape[0]}")


def affine_apply(w, x):
    """Matrix-vector product ``w @ x``."""
    w = np.asarray(w, dtype=np.float64)
    x = _vec(x, "x")
    if w.ndim != 2 or w.shape[1] != x.shape[0]:
        raise ShapeError(f"cannot apply matrix of shape {w.shape} to vector of dim {x.shape[0]}")
    return w @ x


def softmax(logits):
    """Numerically stable softmax of a 1-D logit vector."""
    z = _vec(logits, "logits")
    if not np.all(np.isfinite(z)):
        raise NumericError("softmax input contains non-finite values")
    return K.softmax_rows(z[None, :])[0]


def softmax_rows(logits):
    """Row-wise softmax of a 2-D array (float64)."""
    z = np.ascontiguousarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NumericError("softmax input contains non-finite values")
    return K.softmax_rows(z)


def kl_divergence(p, q, floor=KL_FLOOR):
    """KL(p || q) in nats.

    ``q`` is clamped to ``floor`` inside the log; terms with ``p_i == 0``
    contribute nothing.
    """
    if floor <= 0:
        raise ContractError("floor must be positive")
    p = _vec(p, "p")
    q = _vec(q, "q")
    _same_dim(p, q)
    return float(K.kl_rows(p[None, :], q[None, :], float(floor))[0])


def kl_rows(p, q, floor=KL_FLOOR):
    """Row-wise KL(p[i] || q[i]) for two (n, d) arrays of distributions."""
    p = np.ascontiguousarray(p, dtype=np.float64)
    q = np.ascontiguousarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 2:
        raise ShapeError(f"kl_rows expects equal 2-D shapes, got {p.shape} and {q.shape}")
    return K.kl_rows(p, q, float(floor))


def cosine_distance(u, v):
    """``1 - cos(u, v)``; raises DegenerateVectorError if either norm is zero."""
    u = _vec(u, "u")
    v = _vec(v, "v")
    _same_dim(u, v)
    sim = K.cosine_similarity(u, v)
    if np.isnan(sim):
        raise DegenerateVectorError("cosine distance undefined for a zero-norm vector")
    return float(min(2.0, max(0.0, 1.0 - sim)))


def euclidean_distance(u, v):
    u = _vec(u, "u")
    v = _vec(v, "v")
    _same_dim(u, v)
    return float(K.euclidean_distance(u, v))


def normalize_scores(scores, epsilon=NORMALIZE_EPS):
    """Divide non-negative scores by their sum.

    When the sum is at or below ``epsilon`` the uniform vector is returned
    instead.
    """
    if epsilon <= 0:
        raise ContractError("epsilon must be positive")
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise ShapeError("scores must be a non-empty 1-D sequence")
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise ContractError(f"scores must be finite and non-negative, got {s.tolist()}")
    total = s.sum()
    if total > epsilon:
        return s / total
    return np.full(s.size, 1.0 / s.size)
