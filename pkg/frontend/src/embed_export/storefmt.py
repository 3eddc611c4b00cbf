"""Writer for the embedding-store binary format consumed by placemine.

The format is documented by the consumer: little-endian, magic "SAGE",
version u32 = 1, row count u32, dim u32, then count*dim float32 values
row-major.  A named-section file concatenates [name_len u32][name utf-8]
[store block] records.  This module re-implements the writer so the
exporter depends only on the published file format, not on the
placemine package itself.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"SAGE"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


def encode_store(vectors: np.ndarray) -> bytes:
    v = np.asarray(vectors)
    if v.ndim == 1:
        v = v[None, :]
    if v.ndim != 2:
        raise ValueError("store payload must be a 2-D matrix")
    if not np.all(np.isfinite(v)):
        raise ValueError("store payload contains non-finite values")
    v32 = np.ascontiguousarray(v, dtype="<f4")
    return _HEADER.pack(MAGIC, VERSION, v.shape[0], v.shape[1]) + v32.tobytes()


def write_store(vectors: np.ndarray, path: str | Path) -> None:
    Path(path).write_bytes(encode_store(vectors))


def write_named_stores(sections: Mapping[str, np.ndarray], path: str | Path) -> None:
    out = bytearray()
    for name, vectors in sections.items():
        encoded = name.encode("utf-8")
        out += struct.pack("<I", len(encoded)) + encoded + encode_store(vectors)
    Path(path).write_bytes(bytes(out))
