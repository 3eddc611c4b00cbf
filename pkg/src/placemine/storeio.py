"""File formats: binary embedding stores, metadata CSV, batch manifests,
and flat key=value config files.

An embedding store is a little-endian binary file:
magic "SAGE", version u32 = 1, count u32, dim u32, then count*dim
float32 values row-major.  Parameter files reuse the same header pattern
with a name prefix per section.
"""

from __future__ import annotations

import csv
import io
import struct
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .geograph import PlaceRecord
from .evalharness import ItemMeta
from .sampler import BatchPlan

MAGIC = b"SAGE"
VERSION = 1
_HEADER = struct.Struct("<4sIII")

MANIFEST_COLUMNS = ["id", "city", "cluster", "lat", "lon", "azimuth_deg", "frame_idx", "pair_id"]


class StoreFormatError(ValueError):
    """Malformed or inconsistent embedding-store file."""


def _encode_store(vectors: np.ndarray) -> bytes:
    v = np.asarray(vectors)
    if v.ndim == 1:
        v = v[None, :]
    if v.ndim != 2:
        raise StoreFormatError("store payload must be a 2-D matrix")
    if not np.all(np.isfinite(v)):
        raise StoreFormatError("store payload contains non-finite values")
    v32 = np.ascontiguousarray(v, dtype="<f4")
    return _HEADER.pack(MAGIC, VERSION, v.shape[0], v.shape[1]) + v32.tobytes()


def _decode_store(buf: io.BufferedReader, context: str) -> np.ndarray:
    header = buf.read(_HEADER.size)
    if len(header) < _HEADER.size:
        raise StoreFormatError(f"{context}: truncated header")
    magic, version, count, dim = _HEADER.unpack(header)
    if magic != MAGIC:
        raise StoreFormatError(f"{context}: bad magic {magic!r}")
    if version != VERSION:
        raise StoreFormatError(f"{context}: unsupported version {version}")
    expected = count * dim * 4
    payload = buf.read(expected)
    if len(payload) != expected:
        raise StoreFormatError(
            f"{context}: truncated payload ({len(payload)} of {expected} bytes)"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(count, dim)
    if not np.all(np.isfinite(values)):
        raise StoreFormatError(f"{context}: non-finite values in payload")
    return values.astype(np.float32)


def write_store(vectors: np.ndarray, path: str | Path) -> None:
    Path(path).write_bytes(_encode_store(vectors))


def read_store(path: str | Path) -> np.ndarray:
    with open(path, "rb") as f:
        values = _decode_store(f, str(path))
        if f.read(1):
            raise StoreFormatError(f"{path}: trailing bytes after payload")
    return values


def write_named_stores(sections: Mapping[str, np.ndarray], path: str | Path) -> None:
    """Write named sections: [name_len u32][name utf-8][store block] each."""
    out = bytearray()
    for name, vectors in sections.items():
        encoded = name.encode("utf-8")
        out += struct.pack("<I", len(encoded)) + encoded + _encode_store(vectors)
    Path(path).write_bytes(bytes(out))


def read_named_stores(path: str | Path) -> dict[str, np.ndarray]:
    sections: dict[str, np.ndarray] = {}
    with open(path, "rb") as f:
        while True:
            raw = f.read(4)
            if not raw:
                break
            if len(raw) < 4:
                raise StoreFormatError(f"{path}: truncated section name length")
            (name_len,) = struct.unpack("<I", raw)
            name = f.read(name_len).decode("utf-8")
            sections[name] = _decode_store(f, f"{path}[{name}]")
    return sections


def write_manifest_csv(rows: Sequence[dict], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=MANIFEST_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({c: row.get(c, "") for c in MANIFEST_COLUMNS})


def read_manifest_csv(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != MANIFEST_COLUMNS:
            raise ValueError(
                f"{path}: unexpected manifest columns {reader.fieldnames}"
            )
        rows = list(reader)
    seen = set()
    for row in rows:
        if row["id"] in seen:
            raise ValueError(f"{path}: duplicate image id {row['id']!r}")
        seen.add(row["id"])
    return rows


def manifest_to_places(rows: Sequence[dict]) -> list[PlaceRecord]:
    """Group manifest rows into per-cluster place records."""
    grouped: dict[tuple[str, str], list[dict]] = {}
    for row in rows:
        grouped.setdefault((row["city"], row["cluster"]), []).append(row)
    places = []
    for (city, cluster), members in sorted(grouped.items()):
        places.append(
            PlaceRecord(
                place_id=f"{city}/{cluster}",
                city_id=city,
                cluster_label=int(cluster),
                latitude=float(members[0]["lat"]),
                longitude=float(members[0]["lon"]),
                image_ids=tuple(m["id"] for m in members),
            )
        )
    return places


def manifest_to_metadata(rows: Sequence[dict]) -> list[ItemMeta]:
    def opt_float(v):
        return float(v) if v not in ("", None) else None

    def opt_int(v):
        return int(v) if v not in ("", None) else None

    return [
        ItemMeta(
            item_id=row["id"],
            latitude=opt_float(row["lat"]),
            longitude=opt_float(row["lon"]),
            azimuth_deg=opt_float(row["azimuth_deg"]),
            frame_idx=opt_int(row["frame_idx"]),
            pair_id=row["pair_id"] or None,
        )
        for row in rows
    ]


def format_batch_manifest(plan: BatchPlan) -> str:
    """Stable text form: epoch,batch,clique,rank,place_id,image_id,source."""
    lines = ["epoch,batch,clique,rank,place_id,image_id,source"]
    for b, batch in enumerate(plan.batches):
        for c, clique in enumerate(batch):
            for rank, (place, image) in enumerate(
                zip(clique.member_places, clique.member_images)
            ):
                lines.append(
                    f"{plan.epoch},{b},{c},{rank},{place},{image},{clique.source}"
                )
    return "\n".join(lines) + "\n"


def write_batch_manifest(plan: BatchPlan, path: str | Path) -> None:
    Path(path).write_text(format_batch_manifest(plan), encoding="utf-8")


def read_batch_manifest(path: str | Path) -> list[dict]:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0] != "epoch,batch,clique,rank,place_id,image_id,source":
        raise ValueError(f"{path}: missing batch manifest header")
    rows = []
    seen = set()
    for line in text[1:]:
        epoch, batch, clique, rank, place, image, source = line.split(",")
        key = (epoch, batch, clique, rank)
        if key in seen:
            raise ValueError(f"{path}: duplicate entry {key}")
        seen.add(key)
        rows.append(
            {
                "epoch": int(epoch),
                "batch": int(batch),
                "clique": int(clique),
                "rank": int(rank),
                "place_id": place,
                "image_id": image,
                "source": source,
            }
        )
    return rows


def parse_config(text: str, known_keys: Sequence[str]) -> dict[str, str]:
    """Flat `key = value` config; unknown keys are errors (typo guard)."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known_keys:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        if key in out:
            raise ValueError(f"config line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_config(path: str | Path, known_keys: Sequence[str]) -> dict[str, str]:
    return parse_config(Path(path).read_text(encoding="utf-8"), known_keys)
