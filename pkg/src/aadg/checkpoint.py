"""Versioned, byte-deterministic parameter dumps.

Layout (all little-endian):
    8-byte magic  b"AADGCKPT"
    1-byte format version (1)
    4-byte uint32 header length
    UTF-8 JSON header: {"version", "kind", "meta", "arrays": [{name, shape,
        dtype, offset, nbytes}, ...]} with arrays sorted by name
    raw C-order array buffers, concatenated in header order

Unlike zip-based containers this carries no timestamps, so identical
parameters always produce identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"AADGCKPT"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray], kind: str, meta: dict) -> None:
    entries = []
    offset = 0
    names = sorted(arrays)
    for name in names:
        arr = np.ascontiguousarray(arrays[name])
        nbytes = arr.nbytes
        entries.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": arr.dtype.str,
                "offset": offset,
                "nbytes": nbytes,
            }
        )
        offset += nbytes
    header = {
        "version": FORMAT_VERSION,
        "kind": kind,
        "meta": meta,
        "arrays": entries,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<B", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name in names:
            fh.write(np.ascontiguousarray(arrays[name]).tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], str, dict]:
    data = Path(path).read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    ver = data[len(MAGIC)]
    if ver != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {ver}")
    hlen = struct.unpack("<I", data[len(MAGIC) + 1 : len(MAGIC) + 5])[0]
    body_start = len(MAGIC) + 5
    header = json.loads(data[body_start : body_start + hlen].decode("utf-8"))
    base = body_start + hlen
    arrays = {}
    for entry in header["arrays"]:
        start = base + entry["offset"]
        buf = data[start : start + entry["nbytes"]]
        arr = np.frombuffer(buf, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"])
        arrays[entry["name"]] = arr.copy()
    return arrays, header["kind"], header["meta"]
