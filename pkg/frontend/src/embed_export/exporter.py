"""Run a backbone over an image folder and emit placemine-format files.

Outputs, for an output prefix P:

- ``P.patches.bin``  named-section store with one ``{id}`` section
  (L x M patch matrix) and one ``{id}.token`` section per image — the
  layout `placemine aggregate` consumes directly;
- ``P.tokens.bin``   plain store, one global-token row per image;
- ``P.manifest.csv`` pipeline manifest, rows aligned with token rows;
- ``P.provenance.json`` sidecar recording backbone id, resize edge and
  what was exported or skipped.

Unreadable images are skipped with a logged warning; an export with
zero successful images fails.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backbone import Embedded, get_backbone, load_image
from .storefmt import write_named_stores, write_store

logger = logging.getLogger(__name__)

MANIFEST_COLUMNS = ["id", "city", "cluster", "lat", "lon", "azimuth_deg", "frame_idx", "pair_id"]
IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".webp")


@dataclass(frozen=True)
class ExportJob:
    image_dir: Path
    metadata_csv: Path
    output_prefix: Path
    backbone: str = "patchstats"
    resize_edge: int = 322  # square inference resolution

    def __post_init__(self):
        if self.resize_edge <= 0:
            raise ValueError("resize_edge must be positive")


@dataclass(frozen=True)
class ExportResult:
    patch_store: Path
    token_store: Path
    manifest: Path
    sidecar: Path
    exported_ids: tuple[str, ...]
    skipped_ids: tuple[str, ...] = field(default=())


def read_metadata(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        missing = {"id", "lat", "lon"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: metadata CSV missing columns {sorted(missing)}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: metadata CSV has no rows")
    seen = set()
    for row in rows:
        if row["id"] in seen:
            raise ValueError(f"{path}: duplicate id {row['id']!r}")
        seen.add(row["id"])
    return rows


def _image_path(image_dir: Path, row: dict) -> Path | None:
    if row.get("file"):
        candidate = image_dir / row["file"]
        return candidate if candidate.is_file() else None
    for ext in ("",) + IMAGE_EXTENSIONS:
        candidate = image_dir / f"{row['id']}{ext}"
        if candidate.is_file():
            return candidate
    return None


def embed_single(image_path, backbone: str = "patchstats", resize_edge: int = 322) -> Embedded:
    """Embed one image file; the unit the batch exporter is built from."""
    model = get_backbone(backbone)
    return model.embed(load_image(image_path, resize_edge))


def export_embeddings(job: ExportJob) -> ExportResult:
    model = get_backbone(job.backbone)
    rows = read_metadata(Path(job.metadata_csv))

    sections: dict[str, np.ndarray] = {}
    tokens: list[np.ndarray] = []
    manifest_rows: list[dict] = []
    skipped: list[str] = []
    for row in rows:  # output order fixed by metadata order
        path = _image_path(Path(job.image_dir), row)
        if path is None:
            logger.warning("no image file for id %r; skipping", row["id"])
            skipped.append(row["id"])
            continue
        try:
            embedded = model.embed(load_image(path, job.resize_edge))
        except (OSError, ValueError) as exc:
            logger.warning("unreadable image %s (%s); skipping", path, exc)
            skipped.append(row["id"])
            continue
        sections[row["id"]] = embedded.patches
        sections[f"{row['id']}.token"] = embedded.token[None, :]
        tokens.append(embedded.token)
        manifest_rows.append({c: row.get(c, "") for c in MANIFEST_COLUMNS})

    if not manifest_rows:
        raise RuntimeError("export produced zero successful images")

    prefix = Path(job.output_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    patch_store = prefix.parent / (prefix.name + ".patches.bin")
    token_store = prefix.parent / (prefix.name + ".tokens.bin")
    manifest = prefix.parent / (prefix.name + ".manifest.csv")
    sidecar = prefix.parent / (prefix.name + ".provenance.json")

    write_named_stores(sections, patch_store)
    write_store(np.stack(tokens), token_store)
    with open(manifest, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=MANIFEST_COLUMNS)
        writer.writeheader()
        writer.writerows(manifest_rows)
    sidecar.write_text(json.dumps({
        "backbone": job.backbone,
        "resize_edge": job.resize_edge,
        "patch_count": model.patch_count,
        "patch_dim": model.dim,
        "exported": [r["id"] for r in manifest_rows],
        "skipped": skipped,
    }, indent=2, sort_keys=True) + "\n")

    return ExportResult(
        patch_store=patch_store,
        token_store=token_store,
        manifest=manifest,
        sidecar=sidecar,
        exported_ids=tuple(r["id"] for r in manifest_rows),
        skipped_ids=tuple(skipped),
    )
