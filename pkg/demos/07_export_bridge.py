"""Bridging real images into the pipeline via the exporter.

Uses the optional `embed-export` package (in frontend/) to embed a small
folder of generated images, then feeds its patch store straight into the
`placemine aggregate` command to produce unit-norm global descriptors.
Requires `pip install -e frontend/`.
"""

import sys
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

try:
    from embed_export import ExportJob, export_embeddings
except ImportError:
    sys.exit("embed-export is not installed; run: pip install -e frontend/")

from placemine.cli import main as placemine_main
from placemine.storeio import read_store

rng = np.random.default_rng(0)
with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    img_dir = tmp / "imgs"
    img_dir.mkdir()
    lines = ["id,lat,lon"]
    for i in range(4):
        arr = rng.integers(0, 256, size=(60, 80, 3), dtype=np.uint8)
        Image.fromarray(arr).save(img_dir / f"shot{i}.png")
        lines.append(f"shot{i},{i * 1e-4},0.0")
    (tmp / "meta.csv").write_text("\n".join(lines) + "\n")

    result = export_embeddings(ExportJob(
        image_dir=img_dir, metadata_csv=tmp / "meta.csv",
        output_prefix=tmp / "export", resize_edge=48,
    ))
    print("exported:", result.exported_ids)
    print("files:", [p.name for p in sorted(tmp.iterdir()) if p.is_file()])

    out = tmp / "global.bin"
    rc = placemine_main([
        "aggregate", "--patch-store", str(result.patch_store), "--out", str(out),
        "--seed", "1", "--compress-dim", "8", "--probe-dim", "4", "--token-dim", "6",
    ])
    assert rc == 0
    store = read_store(out)
    norms = np.linalg.norm(store.astype(np.float64), axis=1)
    print(f"aggregated descriptors: {store.shape}, norms in "
          f"[{norms.min():.6f}, {norms.max():.6f}]")
