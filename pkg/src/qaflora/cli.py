"""Command-line entry point: ``qaflora <command> [flags]``.

Errors are reported as a single JSON line on stderr,
``{"error": <code>, "message": <text>}``, with a nonzero exit status
(2 for usage errors, 1 otherwise).
"""

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .adapter import AdapterRegistry
from .errors import QAFloraError
from .evaluation import MODES, score_set
from .export import export_profile, load_centroids, save_centroids, to_json_dict
from .formats import load_adapter, load_model, save_adapter, save_model
from .fusion import build_centroids, compute_weights, divergence_profile, mean_profile
from .generation import GenParams, bench_latency, generate
from .model import ModelConfig
from .tokenizer import EOS, ByteTokenizer
from .toy import make_toy_adapter, make_toy_model

METHODS = ("kl", "cosine", "euclid", "static", "centroid")
GRANULARITY = {"last": "last_token", "all": "all_tokens"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit_error(code, message):
    sys.stderr.write(json.dumps({"error": code, "message": " ".join(str(message).split())}) + "\n")


def _write_json(path, obj):
    if path:
        Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_lines(path):
    text = Path(path).read_text(encoding="utf-8")
    return [line for line in text.splitlines() if line.strip()]


def _queries(args):
    items = list(args.prompt or [])
    if args.queries:
        items += _read_lines(args.queries)
    if not items:
        raise UsageError("no queries given (use --queries FILE or --prompt TEXT)")
    tok = ByteTokenizer()
    return items, [tok.encode(q) for q in items]


def _load(args):
    model = load_model(args.model)
    registry = AdapterRegistry(load_adapter(p) for p in args.adapter)
    if len(registry) == 0:
        raise UsageError("at least one --adapter is required")
    return model, registry


def _centroids(args):
    if args.method == "centroid":
        if not args.centroids:
            raise UsageError("--method centroid requires --centroids")
        return load_centroids(args.centroids)
    return None


def _add_model_args(p, queries=True):
    p.add_argument("--model", required=True, help="model container (.lmt)")
    p.add_argument("--adapter", action="append", default=[], metavar="PATH",
                   help="adapter container (.lat); repeat, order defines adapter index")
    p.add_argument("--mode", choices=("merged", "paper-literal"), default="merged",
                   help="adapter stream mode for capture passes")
    p.add_argument("--json-out", metavar="PATH", help="also write numeric results as JSON here")
    if queries:
        p.add_argument("--queries", metavar="FILE", help="UTF-8 text file, one query per line")
        p.add_argument("--prompt", action="append", metavar="TEXT", help="inline query; repeatable")


def _add_method_args(p):
    p.add_argument("--method", choices=METHODS, default="kl")
    p.add_argument("--granularity", choices=tuple(GRANULARITY), default="last")
    p.add_argument("--centroids", metavar="PATH", help="centroid file (.cen.json) for --method centroid")
    p.add_argument("--temperature-centroid", type=float, default=1.0, dest="centroid_temperature",
                   help="softmax temperature for centroid similarities")
    p.add_argument("--epsilon", type=float, default=1e-8, help="degenerate-row threshold")
    p.add_argument("--parallel", action="store_true", help="score adapters concurrently")


def build_parser():
    p = _Parser(prog="qaflora", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("make-toy", help="write a random toy model and adapters")
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--layers", type=int, default=2)
    s.add_argument("--dim", type=int, default=32)
    s.add_argument("--heads", type=int, default=4)
    s.add_argument("--ff", type=int, default=0, help="FFN width (0: 4*dim)")
    s.add_argument("--vocab", type=int, default=259)
    s.add_argument("--max-seq-len", type=int, default=256)
    s.add_argument("--positional", choices=("rope", "learned"), default="rope")
    s.add_argument("--adapters", type=int, default=2)
    s.add_argument("--rank", type=int, default=4)
    s.add_argument("--scale", type=float, default=None, help="LoRA alpha (default: rank)")
    s.add_argument("--magnitude", type=float, action="append",
                   help="B-factor magnitude; give once or once per adapter (default 1.0)")
    s.add_argument("--out-dir", default=".")
    s.add_argument("--json-out", metavar="PATH")

    s = sub.add_parser("weights", help="fusion weights and divergence profiles per query")
    _add_model_args(s)
    _add_method_args(s)
    s.add_argument("--out-dir", default=".")
    s.add_argument("--format", choices=("csv", "json", "both"), default="csv")

    s = sub.add_parser("generate", help="fused generation")
    _add_model_args(s)
    _add_method_args(s)
    s.add_argument("--max-new-tokens", type=int, default=32)
    s.add_argument("--temperature", type=float, default=0.0, help="0 selects greedy decoding")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--stop", type=int, action="append", metavar="TOKEN_ID",
                   help=f"stop token id; repeatable (default {EOS})")
    s.add_argument("--recompute-every", type=int, metavar="T",
                   help="experimental: recompute weights every T generated tokens")
    s.add_argument("--out", metavar="PATH", help="write generations here instead of stdout")

    s = sub.add_parser("profile", help="mean normalized per-layer profile across queries")
    _add_model_args(s)
    s.add_argument("--method", choices=("kl", "cosine", "euclid"), default="kl")
    s.add_argument("--granularity", choices=tuple(GRANULARITY), default="last")
    s.add_argument("--parallel", action="store_true")
    s.add_argument("--no-normalize", action="store_true", help="skip per-layer normalization")
    s.add_argument("--out", required=True, metavar="PATH", help=".prof.csv or .prof.json")

    s = sub.add_parser("centroids", help="build domain centroids from sample files")
    _add_model_args(s, queries=False)
    s.add_argument("--samples", action="append", default=[], metavar="FILE",
                   help="samples for one adapter (one per line); repeat in adapter order")
    s.add_argument("--pooling", choices=("mean", "last_token"), default="mean")
    s.add_argument("--out", required=True, metavar="PATH", help=".cen.json output")

    s = sub.add_parser("bench", help="latency report as JSON")
    _add_model_args(s)
    _add_method_args(s)
    s.add_argument("--max-new-tokens", type=int, default=8)
    s.add_argument("--compare", action="store_true", help="run serial and parallel, report both")

    s = sub.add_parser("score", help="exact-match accuracy of predictions vs gold answers")
    s.add_argument("--pred", required=True, metavar="FILE")
    s.add_argument("--gold", required=True, metavar="FILE")
    s.add_argument("--mode", choices=MODES, default="string")
    s.add_argument("--json-out", metavar="PATH")
    return p


def _cmd_make_toy(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = ModelConfig(n_layers=args.layers, d_model=args.dim, n_heads=args.heads,
                      vocab_size=args.vocab, max_seq_len=args.max_seq_len, d_ff=args.ff,
                      positional=args.positional)
    model = make_toy_model(args.seed, cfg)
    mags = args.magnitude or [1.0]
    if len(mags) not in (1, args.adapters):
        raise UsageError("--magnitude must be given once or once per adapter")
    paths = {"model": str(save_model(model, out / "model.lmt")), "adapters": []}
    for j in range(args.adapters):
        ad = make_toy_adapter(args.seed + 1 + j, model, args.rank, args.scale,
                              magnitude=mags[j] if len(mags) > 1 else mags[0],
                              adapter_id=f"adapter{j}")
        paths["adapters"].append(str(save_adapter(ad, out / f"adapter{j}.lat")))
    print(json.dumps(paths))
    _write_json(args.json_out, paths)


def _cmd_weights(args):
    model, registry = _load(args)
    cents = _centroids(args)
    _, queries = _queries(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fmts = ("csv", "json") if args.format == "both" else (args.format,)
    summary = []
    for i, toks in enumerate(queries):
        qid = f"q{i:03d}"
        w, prof = compute_weights(model, registry, toks, args.method, GRANULARITY[args.granularity],
                                  args.parallel, cents, args.centroid_temperature, args.epsilon,
                                  args.mode, qid)
        files = []
        for fmt in fmts:
            if prof is not None:
                files.append(export_profile(prof, out / f"{qid}.prof.{fmt}", fmt).name)
            files.append(export_profile(w, out / f"{qid}.weights.prof.{fmt}", fmt).name)
        summary.append({"query_id": qid, "files": files, "weights": to_json_dict(w),
                        "profile": to_json_dict(prof) if prof is not None else None})
    print(json.dumps([s["files"] for s in summary]))
    _write_json(args.json_out, summary)


def _cmd_generate(args):
    model, registry = _load(args)
    cents = _centroids(args)
    texts, queries = _queries(args)
    gran = GRANULARITY[args.granularity]
    params = GenParams(args.max_new_tokens, args.temperature, args.seed,
                       frozenset(args.stop if args.stop else [EOS]))
    tok = ByteTokenizer()
    lines, records = [], []
    for i, toks in enumerate(queries):
        w, _ = compute_weights(model, registry, toks, args.method, gran, args.parallel, cents,
                               args.centroid_temperature, args.epsilon, args.mode, f"q{i:03d}")

        def reweigh(ctx):
            return compute_weights(model, registry, ctx, args.method, gran, args.parallel, cents,
                                   args.centroid_temperature, args.epsilon, args.mode)[0]

        new = generate(model, registry, w, toks, params, args.recompute_every,
                       reweigh if args.recompute_every else None)
        text = tok.decode(new)
        lines.append(json.dumps(text)[1:-1])  # one line per query, escapes kept
        records.append({"query": texts[i], "tokens": new, "text": text,
                        "decoding": "greedy" if params.greedy else f"temperature={params.temperature}"})
    body = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(body, encoding="utf-8")
    else:
        sys.stdout.write(body)
    _write_json(args.json_out, records)


def _cmd_profile(args):
    model, registry = _load(args)
    _, queries = _queries(args)
    measure = "euclidean" if args.method == "euclid" else args.method
    profs = [divergence_profile(model, registry, t, measure, GRANULARITY[args.granularity],
                                args.parallel, args.mode, f"q{i:03d}") for i, t in enumerate(queries)]
    mean = mean_profile(profs, normalize=not args.no_normalize)
    path = export_profile(mean, args.out)
    print(json.dumps({"out": str(path), "n_queries": len(profs)}))
    _write_json(args.json_out, to_json_dict(mean))


def _cmd_centroids(args):
    model, registry = _load(args)
    if len(args.samples) != len(registry):
        raise UsageError(f"need one --samples file per adapter ({len(registry)}), "
                         f"got {len(args.samples)}")
    tok = ByteTokenizer()
    samples = {aid: [tok.encode(s) for s in _read_lines(path)]
               for aid, path in zip(registry.ids, args.samples)}
    cset = build_centroids(model, registry, samples, args.pooling)
    save_centroids(cset, args.out)
    print(json.dumps({"out": args.out, "sample_counts": cset.sample_counts}))
    _write_json(args.json_out, {"adapter_ids": cset.adapter_ids, "sample_counts": cset.sample_counts})


def _cmd_bench(args):
    model, registry = _load(args)
    cents = _centroids(args)
    _, queries = _queries(args)
    gran = GRANULARITY[args.granularity]
    modes = (False, True) if args.compare else (args.parallel,)
    reports, weights = {}, {}
    for par in modes:
        rep, ws = bench_latency(model, registry, queries, par, args.method, gran,
                                args.max_new_tokens, cents)
        reports["parallel" if par else "serial"] = rep.to_dict()
        weights[par] = ws
    result = reports if args.compare else next(iter(reports.values()))
    if args.compare:
        result["weights_identical"] = all(
            (a.alphas == b.alphas).all() for a, b in zip(weights[False], weights[True]))
    print(json.dumps(result, indent=2, sort_keys=True))
    _write_json(args.json_out, result)


def _cmd_score(args):
    res = score_set(Path(args.pred).read_text(encoding="utf-8").splitlines(),
                    Path(args.gold).read_text(encoding="utf-8").splitlines(), args.mode)
    print(json.dumps(res.to_dict()))
    _write_json(args.json_out, res.to_dict())


COMMANDS = {
    "make-toy": _cmd_make_toy,
    "weights": _cmd_weights,
    "generate": _cmd_generate,
    "profile": _cmd_profile,
    "centroids": _cmd_centroids,
    "bench": _cmd_bench,
    "score": _cmd_score,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args)
    except UsageError as e:
        _emit_error("usage", e)
        return 2
    except QAFloraError as e:
        _emit_error(e.code, e)
        return 1
    except (OSError, ValueError, KeyError) as e:
        _emit_error(type(e).__name__, e)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
