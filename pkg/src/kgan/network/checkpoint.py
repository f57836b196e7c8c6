"""Versioned, byte-deterministic checkpoint format.

Layout: 8-byte magic, big-endian uint64 header length, JSON header (config,
metadata, tensor manifest), then the raw tensor buffers in manifest order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .config import KganConfig

MAGIC = b"KGANCKP1"
VERSION = 1


def save_checkpoint(path, params: dict[str, np.ndarray], config: KganConfig, meta: dict | None = None):
    names = sorted(params)
    header = {
        "version": VERSION,
        "config": config.to_dict(),
        "meta": meta or {},
        "tensors": [
            {"name": k, "dtype": str(params[k].dtype), "shape": list(params[k].shape)} for k in names
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack(">Q", len(blob)))
        f.write(blob)
        for k in names:
            f.write(np.ascontiguousarray(params[k]).tobytes())


def load_checkpoint(path):
    """Returns (params, config, meta)."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise FormatError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack(">Q", raw[8:16])
    header = json.loads(raw[16 : 16 + hlen].decode("utf-8"))
    if header.get("version") != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {header.get('version')}")
    params = {}
    offset = 16 + hlen
    for entry in header["tensors"]:
        dtype = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])
        nbytes = dtype.itemsize * int(np.prod(shape)) if shape else dtype.itemsize
        buf = raw[offset : offset + nbytes]
        if len(buf) != nbytes:
            raise FormatError(f"{path}: truncated tensor {entry['name']}")
        params[entry["name"]] = np.frombuffer(buf, dtype=dtype).reshape(shape).copy()
        offset += nbytes
    config = KganConfig.from_dict(header["config"])
    return params, config, header.get("meta", {})
