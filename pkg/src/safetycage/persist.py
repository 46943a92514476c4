"""Versioned JSON + float64 payload persistence for fitted models.

A model saved under stem ``path`` produces ``path.json`` (kind, version,
scalar parameters and an array index) and ``path.bin`` (all arrays as
little-endian float64, concatenated in index order). Integer arrays are
stored as float64 and cast back on load; every value involved is below
2**53 so the round trip is exact.
"""
import json
from pathlib import Path

import numpy as np

PERSIST_VERSION = 1


def save_arrays(path, kind: str, params: dict, arrays: dict[str, np.ndarray]) -> tuple[Path, Path]:
    path = Path(path)
    json_path, bin_path = path.with_suffix(".json"), path.with_suffix(".bin")
    index = []
    offset = 0
    with open(bin_path, "wb") as fh:
        for name, arr in arrays.items():
            arr = np.asarray(arr)
            data = np.ascontiguousarray(arr, dtype="<f8")
            fh.write(data.tobytes())
            index.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape),
                          "offset": offset})
            offset += data.nbytes
    meta = {"kind": kind, "version": PERSIST_VERSION, "params": params, "arrays": index,
            "payload": bin_path.name, "payload_bytes": offset}
    json_path.write_text(json.dumps(meta, indent=2))
    return json_path, bin_path


def load_arrays(path, kind: str) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    if meta.get("kind") != kind:
        raise ValueError(f"expected a {kind!r} model, found {meta.get('kind')!r}")
    if meta.get("version") != PERSIST_VERSION:
        raise ValueError(f"unsupported model version {meta.get('version')}")
    raw = path.with_suffix(".bin").read_bytes()
    if len(raw) != meta["payload_bytes"]:
        raise ValueError("model payload size does not match its index")
    arrays = {}
    for entry in meta["arrays"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        vals = np.frombuffer(raw, dtype="<f8", count=count, offset=entry["offset"])
        arrays[entry["name"]] = vals.astype(np.dtype(entry["dtype"])).reshape(entry["shape"])
    return meta["params"], arrays
