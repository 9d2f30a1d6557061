"""Byte-level tokenizer: ids 0..255 are bytes, then BOS, EOS, PAD."""

BOS = 256
EOS = 257
PAD = 258
VOCAB_SIZE = 259


class ByteTokenizer:
    vocab_size = VOCAB_SIZE
    bos_id = BOS
    eos_id = EOS
    pad_id = PAD

    def encode(self, text, add_bos=True):
        data = text.encode("utf-8") if isinstance(text, str) else bytes(text)
        ids = list(data)
        return [BOS] + ids if add_bos else ids

    def decode_bytes(self, ids):
        """Bytes for the non-special ids; special tokens are dropped."""
        return bytes(i for i in ids if 0 <= i < 256)

    def decode(self, ids, errors="replace"):
        return self.decode_bytes(ids).decode("utf-8", errors=errors)
