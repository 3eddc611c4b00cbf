"""Command-line entry points.

Subcommands: synth, aggregate, graph, sample, evaluate, pipeline.
Every run is fully determined by its config file and --seed; failures
exit nonzero with a stage-tagged message on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import evalharness, interact
from .descriptors import (
    PatchDescriptorSet,
    cfp_aggregate,
    default_aggregation_params,
    default_softp_params,
    l2_normalize,
    softp_modulate,
)
from .geograph import EpochBuildError, dump_graph_debug, rebuild_epoch
from .params import load_descriptor_params
from .pipeline import CONFIG_KEYS, PipelineConfig, run_epoch_pipeline
from .sampler import assemble_epoch_batches
from .storeio import (
    StoreFormatError,
    load_config,
    manifest_to_metadata,
    manifest_to_places,
    read_manifest_csv,
    read_named_stores,
    read_store,
    write_batch_manifest,
    write_manifest_csv,
    write_store,
)
from .synth import synth_epoch_embeddings, synth_manifest_rows

log = logging.getLogger("placemine")


def _load_pipeline_config(args) -> PipelineConfig:
    raw = load_config(args.config, CONFIG_KEYS) if args.config else {}
    config = PipelineConfig.from_mapping(raw)
    if getattr(args, "drift", None) is not None:
        config = dataclasses.replace(
            config, synth=dataclasses.replace(config.synth, drift_rate=args.drift)
        )
    return config


def _cmd_synth(args) -> int:
    config = _load_pipeline_config(args)
    synth_cfg = dataclasses.replace(config.synth, master_seed=args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = synth_manifest_rows(synth_cfg)
    write_manifest_csv(rows, out / "manifest.csv")
    for epoch in range(args.epochs):
        embeddings = synth_epoch_embeddings(synth_cfg, epoch)
        matrix = np.stack([embeddings[row["id"]] for row in rows])
        write_store(matrix, out / f"embeddings.epoch{epoch}.bin")
    print(f"wrote {len(rows)} rows x {args.epochs} epoch store(s) to {out}")
    return 0


def _cmd_aggregate(args) -> int:
    patches = read_named_stores(args.patch_store)
    image_ids = sorted(name for name in patches if not name.endswith(".token"))
    if not image_ids:
        print("[aggregate] patch store holds no image sections", file=sys.stderr)
        return 1
    patch_dim = patches[image_ids[0]].shape[1]
    if args.params:
        softp, agg = load_descriptor_params(args.params)
    else:
        softp = default_softp_params(seed=args.seed, alpha=args.alpha)
        agg = default_aggregation_params(
            patch_dim,
            compress_dim=args.compress_dim,
            probe_dim=args.probe_dim,
            token_dim=args.token_dim if args.token_dim > 0 else None,
            seed=args.seed,
        )
    descriptors = []
    for image_id in image_ids:
        pset, _ = softp_modulate(
            PatchDescriptorSet(patches[image_id], image_id=image_id), softp
        )
        token = patches.get(f"{image_id}.token")
        token_vec = np.asarray(token[0]) if token is not None else None
        if token_vec is None and agg.token_proj is not None:
            agg = dataclasses.replace(agg, token_proj=None)
        descriptors.append(l2_normalize(cfp_aggregate(pset, token_vec, agg)))

    if args.interact:
        enc = interact.random_encoder_params(
            model_dim=args.interact_dim, seed=args.seed
        )
        refined = []
        for start in range(0, len(descriptors), args.interact_batch):
            chunk = descriptors[start : start + args.interact_batch]
            refined.extend(l2_normalize(d) for d in interact.refine_descriptors(chunk, enc))
        descriptors = refined

    matrix = np.stack([d.vector for d in descriptors])
    write_store(matrix, args.out)
    Path(str(args.out) + ".ids.txt").write_text(
        "\n".join(image_ids) + "\n", encoding="utf-8"
    )
    print(f"aggregated {len(image_ids)} images -> {matrix.shape[1]}-d store at {args.out}")
    return 0


def _build_epoch_graphs(config: PipelineConfig, args):
    synth_cfg = dataclasses.replace(config.synth, master_seed=args.seed)
    rows = synth_manifest_rows(synth_cfg)
    places = manifest_to_places(rows)
    embeddings = synth_epoch_embeddings(synth_cfg, args.epoch)
    return rebuild_epoch(
        places,
        embeddings,
        config.graph,
        args.seed,
        args.epoch,
        graphs_per_epoch=config.graphs_per_epoch,
        max_retries=config.max_retries,
        source="synth",
    )


def _cmd_graph(args) -> int:
    config = _load_pipeline_config(args)
    graphs = _build_epoch_graphs(config, args)
    text = dump_graph_debug(graphs)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    print(f"built {len(graphs)} graph(s) for epoch {args.epoch}", file=sys.stderr)
    return 0


def _cmd_sample(args) -> int:
    config = _load_pipeline_config(args)
    graphs = _build_epoch_graphs(config, args)
    plan = assemble_epoch_batches(
        {"synth": graphs},
        config.clique_size,
        config.batches_per_epoch,
        args.seed,
        epoch=args.epoch,
        cliques_per_batch=config.cliques_per_batch,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"batches.epoch{args.epoch}.txt"
    write_batch_manifest(plan, path)
    print(f"wrote {len(plan.batches)} batch(es) to {path}")
    return 0


def _parse_criterion(spec: str) -> evalharness.MatchCriterion:
    parts = spec.split(":")
    kind = parts[0]
    if kind == "radius":
        return evalharness.MatchCriterion.radius(float(parts[1]) if len(parts) > 1 else 25.0)
    if kind == "radius_azimuth":
        return evalharness.MatchCriterion.radius_azimuth(
            float(parts[1]) if len(parts) > 1 else 25.0,
            float(parts[2]) if len(parts) > 2 else 40.0,
        )
    if kind == "frame":
        return evalharness.MatchCriterion.frame_offset(int(parts[1]) if len(parts) > 1 else 10)
    if kind == "unique_pair":
        return evalharness.MatchCriterion.unique_pair()
    raise ValueError(f"unknown criterion spec {spec!r}")


def _cmd_evaluate(args) -> int:
    db_rows = read_manifest_csv(args.db_manifest)
    db_vectors = read_store(args.db_store).astype(np.float64)
    query_rows = read_manifest_csv(args.query_manifest)
    query_vectors = read_store(args.query_store).astype(np.float64)
    criterion = _parse_criterion(args.criterion)
    n_list = [int(n) for n in args.n.split(",")]

    def unit(m):
        return m / np.linalg.norm(m, axis=1, keepdims=True)

    db_vectors, query_vectors = unit(db_vectors), unit(query_vectors)
    if args.pca_dim:
        model = evalharness.pca_fit(db_vectors, args.pca_dim)
        db_vectors = evalharness.pca_project(model, db_vectors)
        query_vectors = evalharness.pca_project(model, query_vectors)

    index = evalharness.RetrievalIndex(db_vectors, tuple(manifest_to_metadata(db_rows)))
    queries = list(zip(query_vectors, manifest_to_metadata(query_rows)))
    recalls = evalharness.recall_at_n(queries, index, criterion, n_list)

    groups: dict[str, np.ndarray] = {}
    for row, vec in zip(db_rows, db_vectors):
        groups.setdefault(f"{row['city']}/{row['cluster']}", []).append(vec)
    ids, aid = evalharness.aid_metric({k: np.stack(v) for k, v in groups.items()})

    text = evalharness.format_results(
        [(args.dataset, args.criterion, n, recalls[n]) for n in sorted(recalls)],
        [("database", aid)],
    )
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_pipeline(args) -> int:
    config = _load_pipeline_config(args)
    run_epoch_pipeline(config, args.epochs, args.seed, args.out_dir)
    print(f"pipeline complete: {args.epochs} epoch(s) in {args.out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="placemine",
        description="Geo-visual hard-batch mining and retrieval evaluation",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, epochs_default=1):
        p.add_argument("--config", default=None, help="key = value config file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--epochs", type=int, default=epochs_default)
        p.add_argument("--out-dir", default="out")
        p.add_argument("--drift", type=float, default=None, help="override drift_rate")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    common(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("aggregate", help="SoftP + bilinear aggregation over a patch store")
    p.add_argument("--patch-store", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--params", default=None, help="named-section parameter file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--compress-dim", type=int, default=128)
    p.add_argument("--probe-dim", type=int, default=64)
    p.add_argument("--token-dim", type=int, default=256)
    p.add_argument("--interact", action="store_true")
    p.add_argument("--interact-dim", type=int, default=768)
    p.add_argument("--interact-batch", type=int, default=8)
    p.set_defaults(func=_cmd_aggregate)

    p = sub.add_parser("graph", help="one epoch of affinity graphs, debug dump")
    common(p)
    p.add_argument("--epoch", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_graph)

    p = sub.add_parser("sample", help="one greedy-sampling epoch -> batch manifest")
    common(p)
    p.add_argument("--epoch", type=int, default=0)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("evaluate", help="recall / AID / PCA report")
    p.add_argument("--db-manifest", required=True)
    p.add_argument("--db-store", required=True)
    p.add_argument("--query-manifest", required=True)
    p.add_argument("--query-store", required=True)
    p.add_argument("--criterion", default="radius:25")
    p.add_argument("--n", default="1,5,10")
    p.add_argument("--pca-dim", type=int, default=None)
    p.add_argument("--dataset", default="dataset")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("pipeline", help="multi-epoch orchestration")
    common(p, epochs_default=2)
    p.set_defaults(func=_cmd_pipeline)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except EpochBuildError as exc:
        print(f"[{exc.stage}] {exc}", file=sys.stderr)
        return 2
    except (StoreFormatError, ValueError, FileNotFoundError) as exc:
        print(f"[{args.command}] {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
