"""CSV/JSON export of divergence profiles and fusion weights, centroid files.

CSV layout is ``layer,adapter_id,value`` sorted by layer then adapter
index; values use 17 significant digits so re-import is exact.  JSON
documents carry a ``type`` field (``profile`` or ``weights``) plus the
dataclass fields, with the matrix as nested lists.
"""

import csv
import io
import json
from pathlib import Path

import numpy as np

from .errors import FormatError
from .fusion import CentroidSet, DivergenceProfile, FusionWeights


def _matrix(obj):
    return obj.values if isinstance(obj, DivergenceProfile) else obj.alphas


def to_csv(obj):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["layer", "adapter_id", "value"])
    m = _matrix(obj)
    for l in range(m.shape[0]):
        for j, aid in enumerate(obj.adapter_ids):
            w.writerow([l, aid, format(float(m[l, j]), ".17g")])
    return buf.getvalue()


def to_json_dict(obj):
    if isinstance(obj, DivergenceProfile):
        return {"type": "profile", "query_id": obj.query_id, "adapter_ids": list(obj.adapter_ids),
                "measure": obj.measure, "granularity": obj.granularity,
                "values": obj.values.tolist()}
    return {"type": "weights", "adapter_ids": list(obj.adapter_ids), "method": obj.method,
            "metadata": obj.metadata, "alphas": obj.alphas.tolist()}


def export_profile(obj, path, fmt=None):
    """Write a profile or weights object as CSV or JSON (by ``fmt`` or suffix)."""
    path = Path(path)
    fmt = fmt or ("json" if path.suffix == ".json" else "csv")
    if fmt == "csv":
        text = to_csv(obj)
    elif fmt == "json":
        text = json.dumps(to_json_dict(obj), indent=2, sort_keys=True) + "\n"
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    path.write_text(text, encoding="utf-8")
    return path


def read_csv_matrix(path):
    """Read a ``layer,adapter_id,value`` CSV back into ``(adapter_ids, matrix)``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["layer", "adapter_id", "value"]:
        raise FormatError("header", f"{path}: expected layer,adapter_id,value")
    ids, cells = [], {}
    for r in rows[1:]:
        if len(r) != 3:
            raise FormatError("row", f"{path}: malformed row {r!r}")
        layer, aid, val = int(r[0]), r[1], float(r[2])
        if aid not in ids:
            ids.append(aid)
        cells[layer, aid] = val
    n = 1 + max(l for l, _ in cells)
    m = np.empty((n, len(ids)))
    for (l, aid), v in cells.items():
        m[l, ids.index(aid)] = v
    return ids, m


def read_json(path):
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    if d.get("type") == "profile":
        return DivergenceProfile(d["query_id"], d["adapter_ids"], d["measure"], d["granularity"],
                                 np.array(d["values"], dtype=np.float64))
    if d.get("type") == "weights":
        return FusionWeights(d["adapter_ids"], np.array(d["alphas"], dtype=np.float64),
                             d.get("method", "kl"), d.get("metadata") or {})
    raise FormatError("type", f"{path}: unknown document type {d.get('type')!r}")


def save_centroids(cset, path):
    doc = {"type": "centroids", "adapter_ids": list(cset.adapter_ids),
           "centroids": cset.centroids.tolist(), "sample_counts": [int(c) for c in cset.sample_counts],
           "pooling": cset.pooling}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return Path(path)


def load_centroids(path):
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    if d.get("type") != "centroids":
        raise FormatError("type", f"{path}: not a centroid file")
    return CentroidSet(d["adapter_ids"], np.array(d["centroids"], dtype=np.float64),
                       d["sample_counts"], d.get("pooling", "mean"))
