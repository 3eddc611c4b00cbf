"""Command line for the embedding exporter."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .exporter import ExportJob, export_embeddings


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="embed-export",
        description="Embed an image folder into placemine-format stores.",
    )
    parser.add_argument("--images", required=True, type=Path, help="image folder")
    parser.add_argument("--metadata", required=True, type=Path,
                        help="CSV with at least id,lat,lon columns")
    parser.add_argument("--backbone", default="patchstats")
    parser.add_argument("--resize-edge", type=int, default=322)
    parser.add_argument("--out-prefix", required=True, type=Path,
                        help="output path prefix for the four emitted files")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, stream=sys.stderr)
    try:
        result = export_embeddings(ExportJob(
            image_dir=args.images,
            metadata_csv=args.metadata,
            backbone=args.backbone,
            resize_edge=args.resize_edge,
            output_prefix=args.out_prefix,
        ))
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"embed-export: {exc}", file=sys.stderr)
        return 1
    print(f"exported {len(result.exported_ids)} images "
          f"({len(result.skipped_ids)} skipped) -> {result.patch_store.parent}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
