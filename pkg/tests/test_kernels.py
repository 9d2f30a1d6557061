import os
import subprocess
import sys

import numpy as np
import pytest

from qaflora import kernels
from qaflora.kernels import _pykernels

needs_compiled = pytest.mark.skipif("compiled" not in kernels.available_backends(),
                                    reason="Cython extension not built")


def _cases(rng, dtype):
    x = rng.standard_normal((5, 16)).astype(dtype)
    g = rng.standard_normal(16).astype(dtype)
    q, k, v = (rng.standard_normal((6, 16)).astype(dtype) for _ in range(3))
    pos = np.arange(3, 9, dtype=np.int64)
    p = _pykernels.softmax_rows(rng.standard_normal((4, 30)))
    r = _pykernels.softmax_rows(rng.standard_normal((4, 30)))
    u, w = rng.standard_normal(30), rng.standard_normal(30)
    return {
        "softmax_rows": (x,),
        "kl_rows": (p, r, 1e-10),
        "rms_norm_rows": (x, g, 1e-5),
        "silu_mul": (x, x[::-1].copy()),
        "rope_rows": (q, pos, 4, 10000.0),
        "causal_attention": (q[2:], k, v, 4, 2),
        "cosine_similarity": (u, w),
        "euclidean_distance": (u, w),
    }


@needs_compiled
@pytest.mark.parametrize("dtype,tol", [(np.float64, 1e-12), (np.float32, 2e-6)])
def test_compiled_matches_fallback(dtype, tol):
    from qaflora.kernels import _ckernels

    cases = _cases(np.random.default_rng(3), dtype)
    for name, args in cases.items():
        if dtype == np.float32 and name in ("kl_rows", "cosine_similarity", "euclidean_distance"):
            continue
        got = np.asarray(getattr(_ckernels, name)(*args))
        want = np.asarray(getattr(_pykernels, name)(*args))
        assert got.dtype == want.dtype or got.ndim == 0, name
        np.testing.assert_allclose(got, want, rtol=tol, atol=tol, err_msg=name)


def test_attention_offset_equals_full_prefix(backend):
    rng = np.random.default_rng(0)
    q, k, v = (rng.standard_normal((7, 8)) for _ in range(3))
    full = kernels.causal_attention(q, k, v, 2, 0)
    tail = kernels.causal_attention(q[4:].copy(), k, v, 2, 4)
    np.testing.assert_allclose(tail, full[4:], rtol=1e-13, atol=1e-13)


def test_first_position_attends_only_to_itself(backend):
    rng = np.random.default_rng(1)
    q, k, v = (rng.standard_normal((3, 8)) for _ in range(3))
    out = kernels.causal_attention(q, k, v, 2, 0)
    np.testing.assert_allclose(out[0], v[0], rtol=1e-14)


def test_rope_position_zero_is_identity(backend):
    x = np.random.default_rng(2).standard_normal((1, 8))
    out = kernels.rope_rows(x, np.zeros(1, dtype=np.int64), 2, 10000.0)
    np.testing.assert_array_equal(out, x)


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")


def test_env_forces_python_fallback():
    env = dict(os.environ, QAFLORA_KERNELS="python")
    out = subprocess.run([sys.executable, "-c", "from qaflora import kernels; print(kernels.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
