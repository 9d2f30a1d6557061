"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--repeat N] [--json-out PATH]
"""

import argparse
import json
import time

import numpy as np

from qaflora import kernels
from qaflora.adapter import AdapterRegistry
from qaflora.fusion import divergence_profile, qa_flora_weights
from qaflora.generation import GenParams, generate
from qaflora.model import ModelConfig
from qaflora.toy import make_toy_adapter, make_toy_model


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times) * 1e3


def _cases(rng):
    x64 = rng.standard_normal((64, 512))
    x32 = x64.astype(np.float32)
    g32 = np.ones(512, np.float32)
    p = kernels.softmax_rows(x64)
    q = kernels.softmax_rows(x64[::-1].copy())
    qkv = rng.standard_normal((3, 48, 128))
    pos = np.arange(48, dtype=np.int64)
    return {
        "softmax_rows": lambda: kernels.softmax_rows(x64),
        "kl_rows": lambda: kernels.kl_rows(p, q, 1e-10),
        "rms_norm_rows[f32]": lambda: kernels.rms_norm_rows(x32, g32, 1e-5),
        "silu_mul": lambda: kernels.silu_mul(x64, x64),
        "rope_rows": lambda: kernels.rope_rows(qkv[0], pos, 4, 10000.0),
        "causal_attention": lambda: kernels.causal_attention(qkv[0], qkv[1], qkv[2], 4, 0),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json-out")
    args = ap.parse_args(argv)

    cfg = ModelConfig(n_layers=4, d_model=64, n_heads=4, vocab_size=259, max_seq_len=128)
    model = make_toy_model(0, cfg)
    reg = AdapterRegistry([make_toy_adapter(1 + j, model, adapter_id=f"a{j}") for j in range(4)])
    rng = np.random.default_rng(0)
    query = [256] + rng.integers(0, 256, 40).tolist()

    def profile():
        return divergence_profile(model, reg, query)

    def decode():
        w = qa_flora_weights(profile())
        return generate(model, reg, w, query, GenParams(max_new_tokens=16))

    results = {}
    for name in kernels.available_backends():
        with kernels.backend_scope(name):
            row = {k: _best(fn, args.repeat) for k, fn in _cases(np.random.default_rng(1)).items()}
            row["divergence_profile(k=4)"] = _best(profile, args.repeat)
            row["weights+generate(16)"] = _best(decode, max(1, args.repeat // 2))
            results[name] = row

    names = list(results)
    print(f"{'case':<26}" + "".join(f"{n + ' ms':>14}" for n in names)
          + ("   speedup" if len(names) == 2 else ""))
    for case in results[names[0]]:
        vals = [results[n][case] for n in names]
        line = f"{case:<26}" + "".join(f"{v:>14.3f}" for v in vals)
        if len(vals) == 2:
            line += f"{vals[1] / vals[0]:>9.1f}x"
        print(line)
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as fh:
            json.dump(results, fh, indent=2)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
