"""Greedy weighted sampling of hard training cliques.

Seeds from the node with the highest mean affinity to the rest of the
graph, then repeatedly adds the candidate with the highest mean affinity
to the current members until the clique reaches size k.  Batch assembly
alternates draws between data sources so every batch carries a balanced
mix.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .geograph import AffinityGraph
from .rng import substream


@dataclass(frozen=True)
class SampledClique:
    members: tuple[int, ...]  # node indices in selection order
    member_places: tuple[str, ...]
    member_images: tuple[str, ...]
    source: str
    mean_internal_affinity: float
    graph_epoch: int = 0

    def __post_init__(self):
        if len(set(self.members)) != len(self.members):
            raise ValueError("clique members must be distinct")


@dataclass(frozen=True)
class BatchPlan:
    epoch: int
    batches: tuple[tuple[SampledClique, ...], ...]

    def source_balance(self) -> list[dict[str, int]]:
        """Per-batch clique counts per source."""
        out = []
        for batch in self.batches:
            counts: dict[str, int] = {}
            for clique in batch:
                counts[clique.source] = counts.get(clique.source, 0) + 1
            out.append(counts)
        return out


def _check_weight_matrix(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError("weight matrix must be square")
    if not np.allclose(w, w.T) or np.any(np.diag(w) != 0.0):
        raise ValueError("weight matrix must be symmetric with zero diagonal")
    return w


def seed_scores(w: np.ndarray) -> np.ndarray:
    """Mean affinity of each node to all others: S(i) = sum_j W_ij / (n-1)."""
    w = _check_weight_matrix(w)
    n = w.shape[0]
    if n < 2:
        raise ValueError("seed scores need at least 2 nodes")
    return w.sum(axis=1) / (n - 1)


def select_seed(scores: np.ndarray) -> int:
    """Index of the maximum score; ties break to the lowest index."""
    scores = np.asarray(scores)
    if scores.size == 0:
        raise ValueError("empty score vector")
    return int(np.argmax(scores))


def greedy_expand(w: np.ndarray, seed: int, k: int) -> list[int]:
    """Grow a clique from the seed by successive mean-affinity argmax.

    At each step the candidate maximizing mean affinity to the current
    members joins; ties break to the lowest index.  Returns members in
    selection order.
    """
    w = _check_weight_matrix(w)
    n = w.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"clique size {k} out of range for {n} nodes")
    if not 0 <= seed < n:
        raise ValueError("seed index out of range")
    members = [seed]
    remaining = [v for v in range(n) if v != seed]
    while len(members) < k:
        means = np.array([w[members, v].mean() for v in remaining])
        best = remaining[int(np.argmax(means))]
        members.append(best)
        remaining.remove(best)
    return members


def sample_clique(graph: AffinityGraph, k: int) -> SampledClique:
    """Run the full seed-and-expand pass on one graph."""
    scores = seed_scores(graph.weights)
    order = greedy_expand(graph.weights, select_seed(scores), k)
    sub = graph.weights[np.ix_(order, order)]
    n = len(order)
    mean_aff = float(sub.sum() / (n * (n - 1))) if n > 1 else 0.0
    return SampledClique(
        members=tuple(order),
        member_places=tuple(graph.nodes[i] for i in order),
        member_images=tuple(graph.rep_images[i] for i in order),
        source=graph.source,
        mean_internal_affinity=mean_aff,
        graph_epoch=graph.epoch,
    )


def assemble_epoch_batches(
    graphs_by_source: Mapping[str, Sequence[AffinityGraph]],
    k: int,
    batches_requested: int,
    master_seed: int,
    epoch: int = 0,
    cliques_per_batch: int = 4,
) -> BatchPlan:
    """Deterministic batch assembly with balanced source contributions.

    Clique draws alternate between sources so each batch holds an equal
    (within one) number of cliques per source; each clique comes from a
    distinct graph.  Runs short with a warning when graphs run out.
    """
    sources = sorted(s for s in graphs_by_source if graphs_by_source[s])
    if not sources:
        raise ValueError("no graphs available from any source")
    if len(sources) == 1:
        warnings.warn(
            f"only one source ({sources[0]}) available; batches are unbalanced",
            stacklevel=2,
        )

    queues = {}
    for s in sources:
        order = substream(master_seed, "batch_order", epoch, s).permutation(
            len(graphs_by_source[s])
        )
        queues[s] = [graphs_by_source[s][i] for i in order]

    batches: list[tuple[SampledClique, ...]] = []
    for _ in range(batches_requested):
        batch: list[SampledClique] = []
        for turn in range(cliques_per_batch):
            src = sources[turn % len(sources)]
            if not queues[src]:
                continue
            batch.append(sample_clique(queues[src].pop(0), k))
        if not batch:
            break
        batches.append(tuple(batch))
    if len(batches) < batches_requested:
        warnings.warn(
            f"only {len(batches)} of {batches_requested} batches assembled: "
            "insufficient graphs",
            stacklevel=2,
        )
    return BatchPlan(epoch=epoch, batches=tuple(batches))
