from qaflora.model import ModelConfig


def toy_config(**kw):
    base = dict(n_layers=2, d_model=32, n_heads=4, vocab_size=259, max_seq_len=64)
    base.update(kw)
    return ModelConfig(**base)


def random_query(rng, n=None, vocab=259):
    n = n or int(rng.integers(2, 12))
    return [min(256, vocab - 1)] + rng.integers(0, min(vocab, 256), size=n - 1).tolist()
