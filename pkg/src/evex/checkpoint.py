"""Deterministic binary checkpoints: named float64 tensors plus a config header.

Layout: 8-byte magic, little-endian uint64 header length, UTF-8 JSON header
(sorted keys) listing config and parameter names/shapes, then the raw
little-endian float64 payloads in header order. Identical state produces
identical bytes, and values round-trip bit exactly.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"EVXCKPT1"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, config: dict, state: dict) -> None:
    names = list(state.keys())
    header = {
        "format": FORMAT_VERSION,
        "config": config,
        "params": [{"name": n, "shape": list(state[n].shape)} for n in names],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(state[n], dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("format") != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint format {header.get('format')}")
        state = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise CheckpointError(f"{path}: truncated payload for {entry['name']}")
            state[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
        trailing = fh.read(1)
        if trailing:
            raise CheckpointError(f"{path}: trailing bytes after payload")
    return header["config"], state
