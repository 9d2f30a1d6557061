import numpy as np
import pytest

import oracle
from qaflora.adapter import AdapterRegistry, LoraAdapter, LoraLayer
from qaflora.errors import CapacityError, ShapeError
from qaflora.fusion import FusionWeights, compute_weights, static_weights
from qaflora.generation import FusedSession, GenParams, bench_latency, fused_forward, generate
from qaflora.model import final_logits, forward_capture
from qaflora.toy import make_toy_adapter

Q = [256, 72, 105, 33, 10, 7]


def _base_logits(model, q):
    h = forward_capture(model, q).hidden[-1][None]
    return final_logits(model, h, np.float64)[0]


def test_zero_weights_equal_base(toy_model, registry):
    w = FusionWeights(registry.ids, np.zeros((2, 2)))
    assert fused_forward(toy_model, registry, w, Q).tobytes() == _base_logits(toy_model, Q).tobytes()


def test_single_adapter_full_weight_equals_merged(toy_model, toy_adapters):
    reg = AdapterRegistry(toy_adapters[:1])
    got = fused_forward(toy_model, reg, FusionWeights(reg.ids, np.ones((2, 1))), Q)
    h = forward_capture(toy_model, Q, toy_adapters[0]).hidden[-1][None]
    assert got.tobytes() == final_logits(toy_model, h, np.float64)[0].tobytes()


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_fused_forward_matches_dense_merge(toy_model, toy_adapters, registry, seed, backend):
    alphas = np.random.default_rng(seed).random((2, 2))
    got = fused_forward(toy_model, registry, FusionWeights(registry.ids, alphas), Q)
    combos = [(alphas[:, j], oracle.dense_deltas(ad)) for j, ad in enumerate(toy_adapters)]
    _, logits = oracle.forward(toy_model, oracle.merged_weights(toy_model, combos), Q)
    want = logits[-1]
    assert np.max(np.abs(got - want)) <= 1e-5 * np.max(np.abs(want))


def test_float32_session_close_to_float64(toy_model, registry):
    w = static_weights(2, 2, registry.ids)
    a = fused_forward(toy_model, registry, w, Q)
    b = fused_forward(toy_model, registry, w, Q, dtype=np.float32)
    assert b.dtype == np.float32
    np.testing.assert_allclose(b, a, atol=1e-3)


def test_kv_cache_matches_full_recompute(toy_model, registry):
    w = static_weights(2, 2, registry.ids)
    s = FusedSession(toy_model, registry, w, np.float64)
    s.feed(Q[:3])
    s.feed(Q[3:5])
    inc = s.feed(Q[5:])
    np.testing.assert_allclose(inc, fused_forward(toy_model, registry, w, Q), rtol=1e-12, atol=1e-12)


def test_output_linear_in_alpha_unit_layer(toy_model):
    rng = np.random.default_rng(3)
    t = "blocks.1.down_proj"
    ad = LoraAdapter("u", [LoraLayer(t, rng.standard_normal((2, 128)), rng.standard_normal((32, 2)), 2.0)])
    # only the last linear layer is targeted, so its input activations do not depend on alpha
    h_base = forward_capture(toy_model, Q).hidden[-1]

    def out(alpha):
        return forward_capture(toy_model, Q, ad, weights=[0.0, alpha]).hidden[-1]

    d1, d2 = out(0.25) - h_base, out(0.75) - h_base
    np.testing.assert_allclose(d2, 3.0 * d1, atol=1e-9, rtol=0)


def test_weight_shape_checked(toy_model, registry):
    with pytest.raises(ShapeError):
        fused_forward(toy_model, registry, FusionWeights(["a"], np.ones((2, 1))), Q)


def test_greedy_determinism_and_limits(toy_model, registry):
    w, _ = compute_weights(toy_model, registry, Q)
    p = GenParams(max_new_tokens=12)
    a = generate(toy_model, registry, w, Q, p)
    assert a == generate(toy_model, registry, w, Q, p)
    assert len(a) <= 12
    assert generate(toy_model, registry, w, Q, GenParams(max_new_tokens=0)) == []


def test_greedy_first_token_is_argmax(toy_model, registry):
    w = static_weights(2, 2, registry.ids)
    first = generate(toy_model, registry, w, Q, GenParams(max_new_tokens=1))
    logits = fused_forward(toy_model, registry, w, Q, dtype=np.float32)
    assert first == [int(np.flatnonzero(logits == logits.max())[0])]


def test_sampling_seeded(toy_model, registry):
    w = static_weights(2, 2, registry.ids)
    p = GenParams(max_new_tokens=15, temperature=1.5, seed=11)
    a = generate(toy_model, registry, w, Q, p)
    assert a == generate(toy_model, registry, w, Q, p)
    others = {tuple(generate(toy_model, registry, w, Q, GenParams(15, 1.5, s))) for s in range(5)}
    assert len(others) > 1


def test_stop_token(toy_model, registry):
    w = static_weights(2, 2, registry.ids)
    free = generate(toy_model, registry, w, Q, GenParams(max_new_tokens=5))
    stopped = generate(toy_model, registry, w, Q, GenParams(5, stop_tokens={free[2]}))
    assert stopped == free[: free.index(free[2])]


def test_capacity(toy_model, registry):
    w = static_weights(2, 2, registry.ids)
    with pytest.raises(CapacityError):
        generate(toy_model, registry, w, [256] * 60, GenParams(max_new_tokens=10))
    assert len(generate(toy_model, registry, w, [256] * 60, GenParams(max_new_tokens=5))) <= 5


def test_recompute_every(toy_model, registry):
    w, _ = compute_weights(toy_model, registry, Q)
    calls = []

    def reweigh(ctx):
        calls.append(len(ctx))
        return compute_weights(toy_model, registry, ctx)[0]

    out = generate(toy_model, registry, w, Q, GenParams(max_new_tokens=7), recompute_every=3,
                   reweigh=reweigh)
    assert len(out) == 7 and calls == [len(Q) + 3, len(Q) + 6]


def test_static_and_qa_flora_generation_terminate(toy_model, registry):
    for w in (static_weights(2, 2, registry.ids), compute_weights(toy_model, registry, Q)[0]):
        assert len(generate(toy_model, registry, w, Q, GenParams(max_new_tokens=6))) <= 6


def test_bench_latency(toy_model, toy_adapters):
    reg1 = AdapterRegistry(toy_adapters[:1])
    rep, ws = bench_latency(toy_model, reg1, [Q, Q[:3]], max_new_tokens=4)
    assert rep.k == 1 and rep.weight_compute_ms_per_adapter == rep.weight_compute_ms_per_query
    assert min(rep.prefill_ms, rep.decode_ms_per_token, rep.weight_compute_ms_per_query) >= 0
    reg = AdapterRegistry([*toy_adapters, make_toy_adapter(9, toy_model, adapter_id="c")])
    rs, ws_s = bench_latency(toy_model, reg, [Q], parallel=False)
    rp, ws_p = bench_latency(toy_model, reg, [Q], parallel=True)
    assert rp.parallel and not rs.parallel
    assert ws_s[0].alphas.tobytes() == ws_p[0].alphas.tobytes()
