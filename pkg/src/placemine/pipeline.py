"""Multi-epoch orchestration over synthetic or file-backed data.

Per epoch: (re)derive embeddings, rebuild the affinity graphs, run
greedy weighted sampling, and emit a batch manifest.  Everything is a
pure function of (config, master_seed), so re-runs are byte-identical.
Wall-clock timings go to the logger, never into the report, to keep the
report deterministic.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import time
from pathlib import Path
from typing import Optional

import numpy as np

from .geograph import GraphConfig, rebuild_epoch
from .sampler import assemble_epoch_batches
from .storeio import (
    format_batch_manifest,
    manifest_to_places,
    write_manifest_csv,
    write_store,
)
from .synth import SynthConfig, synth_epoch_embeddings, synth_manifest_rows

log = logging.getLogger(__name__)

CONFIG_KEYS = [
    # synthetic dataset
    "cities", "clusters_per_city", "images_per_cluster", "cluster_spacing",
    "descriptor_dim", "drift_rate", "noise_sigma",
    # graph construction
    "tau_geo", "tau2_quantile", "similar_places", "min_clique_size",
    "temperature", "knn_cap", "normalize_scales", "graphs_per_epoch", "max_retries",
    # sampling
    "clique_size", "cliques_per_batch", "batches_per_epoch",
    # data sources
    "sources",
]


@dataclasses.dataclass(frozen=True)
class PipelineConfig:
    synth: SynthConfig = SynthConfig()
    graph: GraphConfig = GraphConfig()
    clique_size: int = 4
    cliques_per_batch: int = 4
    batches_per_epoch: int = 2
    graphs_per_epoch: int = 8
    max_retries: int = 60
    sources: tuple[str, ...] = ("synth",)

    @classmethod
    def from_mapping(cls, raw: dict[str, str]) -> "PipelineConfig":
        def geti(key, default):
            return int(raw[key]) if key in raw else default

        def getf(key, default):
            return float(raw[key]) if key in raw else default

        synth = SynthConfig(
            cities=geti("cities", 4),
            clusters_per_city=geti("clusters_per_city", 30),
            images_per_cluster=geti("images_per_cluster", 6),
            cluster_spacing=getf("cluster_spacing", 50.0),
            descriptor_dim=geti("descriptor_dim", 32),
            drift_rate=getf("drift_rate", 0.0),
            noise_sigma=getf("noise_sigma", 0.05),
        )
        graph = GraphConfig(
            tau_geo=getf("tau_geo", 75.0),
            tau2_quantile=getf("tau2_quantile", 0.5),
            similar_places=geti("similar_places", 15),
            min_clique_size=geti("min_clique_size", 10),
            temperature=getf("temperature", 0.25),
            knn_cap=geti("knn_cap", 10),
            normalize_scales=raw.get("normalize_scales", "false").lower() == "true",
        )
        sources = tuple(
            s.strip() for s in raw.get("sources", "synth").split(",") if s.strip()
        )
        return cls(
            synth=synth,
            graph=graph,
            clique_size=geti("clique_size", 4),
            cliques_per_batch=geti("cliques_per_batch", 4),
            batches_per_epoch=geti("batches_per_epoch", 2),
            graphs_per_epoch=geti("graphs_per_epoch", 8),
            max_retries=geti("max_retries", 60),
            sources=sources,
        )


def config_hash(config: PipelineConfig) -> str:
    blob = json.dumps(dataclasses.asdict(config), sort_keys=True, default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _source_seed(master_seed: int, source: str) -> int:
    digest = hashlib.sha256(f"{master_seed}:{source}".encode()).digest()[:8]
    return int.from_bytes(digest, "little")


def run_epoch_pipeline(
    config: PipelineConfig,
    epochs: int,
    master_seed: int,
    out_dir: str | Path,
    write_dataset: bool = True,
) -> dict:
    """Run the full per-epoch pipeline and return the (deterministic) report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report: dict = {
        "config_hash": config_hash(config),
        "master_seed": master_seed,
        "epochs": epochs,
        "sources": list(config.sources),
        "per_epoch": [],
    }

    datasets = {}
    for source in config.sources:
        seed = _source_seed(master_seed, source)
        synth_cfg = dataclasses.replace(config.synth, master_seed=seed)
        rows = synth_manifest_rows(synth_cfg)
        datasets[source] = (synth_cfg, rows, manifest_to_places(rows))
        if write_dataset:
            write_manifest_csv(rows, out / f"{source}.manifest.csv")

    for epoch in range(epochs):
        t0 = time.perf_counter()
        graphs_by_source = {}
        epoch_stats = {"epoch": epoch, "sources": {}}
        for source in config.sources:
            synth_cfg, rows, places = datasets[source]
            embeddings = synth_epoch_embeddings(synth_cfg, epoch)
            if write_dataset:
                matrix = np.stack([embeddings[row["id"]] for row in rows])
                write_store(matrix, out / f"{source}.epoch{epoch}.bin")
            graphs = rebuild_epoch(
                places,
                embeddings,
                config.graph,
                master_seed,
                epoch,
                graphs_per_epoch=config.graphs_per_epoch,
                max_retries=config.max_retries,
                source=source,
            )
            graphs_by_source[source] = graphs
            edge_sets = [sorted(g.edges) for g in graphs]
            epoch_stats["sources"][source] = {
                "graphs": len(graphs),
                "nodes": [g.node_count for g in graphs],
                "edges": [len(e) for e in edge_sets],
                "mean_weight": [
                    float(np.mean([g.weights[i, j] for i, j in e])) if e else 0.0
                    for g, e in zip(graphs, edge_sets)
                ],
                "edge_list": [[list(p) for p in e] for e in edge_sets],
                "graph_nodes": [list(g.nodes) for g in graphs],
            }

        plan = assemble_epoch_batches(
            graphs_by_source,
            config.clique_size,
            config.batches_per_epoch,
            master_seed,
            epoch=epoch,
            cliques_per_batch=config.cliques_per_batch,
        )
        manifest_text = format_batch_manifest(plan)
        (out / f"batches.epoch{epoch}.txt").write_text(manifest_text, encoding="utf-8")
        epoch_stats["batches"] = len(plan.batches)
        epoch_stats["source_balance"] = plan.source_balance()
        report["per_epoch"].append(epoch_stats)
        log.info("epoch %d finished in %.3fs", epoch, time.perf_counter() - t0)

    report_path = out / "report.json"
    report_path.write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return report
