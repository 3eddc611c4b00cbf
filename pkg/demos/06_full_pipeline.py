"""End-to-end mining pipeline and on-disk artifacts.

Runs the full synthetic pipeline twice into separate directories —
dataset generation, per-epoch graph construction, clique sampling and
batch assembly — and verifies the outputs are byte-identical, then
peeks at the report and the batch manifest. The same run is available
from the command line as `placemine pipeline`.
"""

import json
import tempfile
from pathlib import Path

from placemine import PipelineConfig, read_batch_manifest, run_epoch_pipeline

config = PipelineConfig.from_mapping({
    "cities": "3",
    "clusters_per_city": "25",
    "images_per_cluster": "3",
    "cluster_spacing": "20.0",
    "descriptor_dim": "16",
    "noise_sigma": "0.2",
    "drift_rate": "0.1",
    "tau_geo": "75.0",
    "graphs_per_epoch": "4",
    "batches_per_epoch": "2",
    "cliques_per_batch": "2",
    "sources": "synth_a,synth_b",
})

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    report = run_epoch_pipeline(config, epochs=2, master_seed=314, out_dir=tmp / "run1")
    run_epoch_pipeline(config, epochs=2, master_seed=314, out_dir=tmp / "run2")

    identical = all(
        (tmp / "run1" / p.name).read_bytes() == p.read_bytes()
        for p in sorted((tmp / "run2").iterdir())
    )
    print("re-run byte-identical:", identical)
    print("config hash:", report["config_hash"])

    for epoch_stats in report["per_epoch"]:
        counts = epoch_stats["source_balance"]
        print(f"epoch {epoch_stats['epoch']}: {epoch_stats['batches']} batches, "
              f"source balance per batch = {counts}")

    rows = read_batch_manifest(tmp / "run1" / "batches.epoch0.txt")
    print("\nfirst clique of epoch 0:")
    for row in rows[:4]:
        print(f"  rank {row['rank']}: {row['place_id']} ({row['image_id']}) from {row['source']}")

    on_disk = json.loads((tmp / "run1" / "report.json").read_text())
    print("\nreport keys:", sorted(on_disk))
