"""Flat-binary array interchange: <base>.bin (float32 LE, C order) + <base>.json.

The sidecar records shape, spatial dims and provenance so kernels can be
invoked on dumped inputs from other languages or processes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .grids import FeatureGrid, SparseTokens


def dump_array(base, array: np.ndarray, height: int, width: int, extra: dict | None = None):
    """Write <base>.bin + <base>.json for a (B, L, C) or (B, k, C) buffer."""
    base = Path(base)
    arr = np.ascontiguousarray(array, dtype="<f4")
    Path(str(base) + ".bin").write_bytes(arr.tobytes())
    meta = {
        "shape": list(arr.shape),
        "height": int(height),
        "width": int(width),
        "dtype": "float32",
    }
    if extra:
        meta.update(extra)
    Path(str(base) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_array(base):
    """Read a dumped buffer; returns (array, meta)."""
    base = Path(base)
    meta = json.loads(Path(str(base) + ".json").read_text())
    if meta.get("dtype") != "float32":
        raise ValueError(f"{base}: unsupported dtype {meta.get('dtype')!r}")
    raw = Path(str(base) + ".bin").read_bytes()
    arr = np.frombuffer(raw, dtype="<f4")
    shape = tuple(meta["shape"])
    if arr.size != int(np.prod(shape)):
        raise ValueError(f"{base}: payload has {arr.size} floats, sidecar says {shape}")
    return arr.reshape(shape).astype(np.float64), meta


def dump_grid(base, grid: FeatureGrid, extra: dict | None = None):
    dump_array(base, grid.data, grid.height, grid.width, extra)


def load_grid(base) -> FeatureGrid:
    arr, meta = load_array(base)
    return FeatureGrid(arr, int(meta["height"]), int(meta["width"]))


def dump_sparse(base, sparse: SparseTokens, extra: dict | None = None):
    h, w = sparse.source_shape
    extra = dict(extra or {})
    extra["kept_indices"] = [[int(t) for t in row] for row in sparse.kept_indices]
    dump_array(base, sparse.data, h, w, extra)


def load_sparse(base) -> SparseTokens:
    arr, meta = load_array(base)
    idx = np.asarray(meta["kept_indices"], dtype=np.int64)
    return SparseTokens(arr, idx, (int(meta["height"]), int(meta["width"])))
