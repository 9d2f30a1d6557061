"""Tensor containers for models (``.lmt``) and adapters (``.lat``).

File layout::

    [8 bytes]  little-endian uint64: manifest length M
    [M bytes]  UTF-8 JSON manifest
    [rest]     blob: little-endian float32 tensors, row-major, in manifest order

Manifest keys: ``format_version`` (1), ``kind``, ``metadata``, ``blob_length``,
``blob_sha256`` and ``tensors``, a list of ``{name, dtype, shape,
byte_offset, byte_length}`` records with offsets relative to the blob start.
"""

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adapter import LoraAdapter, LoraLayer
from .errors import FormatError
from .model import BaseModel, ModelConfig

FORMAT_VERSION = 1
_DTYPE = "float32"
_LE_F32 = np.dtype("<f4")


@dataclass
class TensorContainer:
    tensors: dict  # name -> ndarray (float32)
    metadata: dict = field(default_factory=dict)
    kind: str = "tensors"


def _encode(container):
    records, chunks, offset = [], [], 0
    for name, arr in container.tensors.items():
        a = np.ascontiguousarray(arr, dtype=_LE_F32)
        if not np.all(np.isfinite(a)):
            raise FormatError("tensors", f"tensor {name!r} has non-finite entries")
        raw = a.tobytes(order="C")
        records.append({"name": name, "dtype": _DTYPE, "shape": list(a.shape),
                        "byte_offset": offset, "byte_length": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    blob = b"".join(chunks)
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": container.kind,
        "metadata": container.metadata,
        "blob_length": len(blob),
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
        "tensors": records,
    }
    header = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return struct.pack("<Q", len(header)) + header + blob


def write_container(path, container):
    data = _encode(container)
    Path(path).write_bytes(data)
    return Path(path)


def _decode(data):
    if len(data) < 8:
        raise FormatError("header", "file shorter than the 8-byte manifest length prefix")
    (mlen,) = struct.unpack("<Q", data[:8])
    if 8 + mlen > len(data):
        raise FormatError("header", f"manifest length {mlen} exceeds file size {len(data)}")
    try:
        manifest = json.loads(data[8:8 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError("manifest", f"not valid JSON: {e}") from None
    if not isinstance(manifest, dict):
        raise FormatError("manifest", "must be a JSON object")
    if manifest.get("format_version") != FORMAT_VERSION:
        raise FormatError("format_version", f"expected {FORMAT_VERSION}, got "
                                            f"{manifest.get('format_version')!r}")
    blob = data[8 + mlen:]
    records = manifest.get("tensors")
    if not isinstance(records, list):
        raise FormatError("tensors", "missing tensor record list")
    spans, tensors = [], {}
    for rec in records:
        name = rec.get("name")
        if not isinstance(name, str) or name in tensors:
            raise FormatError("name", f"missing or duplicate tensor name {name!r}")
        if rec.get("dtype") != _DTYPE:
            raise FormatError("dtype", f"tensor {name!r}: unsupported dtype {rec.get('dtype')!r}")
        shape = rec.get("shape")
        if not isinstance(shape, list) or not all(isinstance(s, int) and s > 0 for s in shape):
            raise FormatError("shape", f"tensor {name!r}: invalid shape {shape!r}")
        off, length = rec.get("byte_offset"), rec.get("byte_length")
        if not isinstance(off, int) or off < 0:
            raise FormatError("byte_offset", f"tensor {name!r}: invalid offset {off!r}")
        if not isinstance(length, int) or length != math.prod(shape) * 4:
            raise FormatError("byte_length", f"tensor {name!r}: byte_length {length!r} does not "
                                             f"match shape {shape} (expected {math.prod(shape) * 4})")
        if off + length > len(blob):
            raise FormatError("byte_length", f"tensor {name!r}: byte_offset {off} + byte_length "
                                             f"{length} runs past blob end ({len(blob)} bytes)")
        spans.append((off, off + length, name))
        tensors[name] = (shape, off, length)
    spans.sort()
    for (s0, e0, n0), (s1, _, n1) in zip(spans, spans[1:]):
        if s1 < e0:
            raise FormatError("byte_offset", f"tensors {n0!r} and {n1!r} overlap")
    if manifest.get("blob_length") != len(blob):
        raise FormatError("blob_length", f"manifest says {manifest.get('blob_length')!r}, "
                                         f"file holds {len(blob)} bytes")
    if manifest.get("blob_sha256") != hashlib.sha256(blob).hexdigest():
        raise FormatError("blob_sha256", "checksum mismatch")
    out = {}
    for name, (shape, off, length) in tensors.items():
        a = np.frombuffer(blob, dtype=_LE_F32, count=length // 4, offset=off).reshape(shape)
        out[name] = a.astype(np.float32)
    return TensorContainer(out, manifest.get("metadata") or {}, manifest.get("kind", "tensors"))


def read_container(path):
    return _decode(Path(path).read_bytes())


def save_model(model, path):
    meta = {"config": model.config.to_dict()}
    return write_container(path, TensorContainer(model.tensors(), meta, "model"))


def load_model(path):
    c = read_container(path)
    if c.kind != "model" or "config" not in c.metadata:
        raise FormatError("kind", f"{path} is not a model container")
    return BaseModel.from_tensors(ModelConfig.from_dict(c.metadata["config"]), c.tensors)


def save_adapter(adapter, path):
    tensors, layers = {}, {}
    for t, layer in adapter.layers.items():
        tensors[f"{t}.lora_a"] = layer.a
        tensors[f"{t}.lora_b"] = layer.b
        layers[t] = {"rank": layer.rank, "scale": float(layer.scale)}
    meta = {"id": adapter.id, "layers": layers, "metadata": adapter.metadata}
    return write_container(path, TensorContainer(tensors, meta, "adapter"))


def load_adapter(path):
    c = read_container(path)
    if c.kind != "adapter" or "id" not in c.metadata:
        raise FormatError("kind", f"{path} is not an adapter container")
    layers = []
    for t, info in c.metadata.get("layers", {}).items():
        try:
            a, b = c.tensors[f"{t}.lora_a"], c.tensors[f"{t}.lora_b"]
        except KeyError:
            raise FormatError("tensors", f"missing factors for target {t!r}") from None
        if a.shape[0] != info.get("rank"):
            raise FormatError("rank", f"target {t!r}: rank {info.get('rank')} but A has "
                                      f"{a.shape[0]} rows")
        layers.append(LoraLayer(t, a, b, float(info["scale"])))
    return LoraAdapter(c.metadata["id"], layers, c.metadata.get("metadata") or {})


def container_checksum(tensors):
    """SHA-256 over names and float32 bytes, in iteration order."""
    h = hashlib.sha256()
    for name, arr in tensors.items():
        h.update(name.encode("utf-8"))
        h.update(np.ascontiguousarray(arr, dtype=_LE_F32).tobytes())
    return h.hexdigest()
