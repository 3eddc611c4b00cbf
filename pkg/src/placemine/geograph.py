"""Per-epoch geo-visual affinity graph construction.

Each epoch: pick a city (probability proportional to cluster count),
draw one representative image per cluster, pool similar places around a
random anchor, connect places within a geographic radius, extract a
clique of confusable places, and weight its pairs by the negated product
of geographic and visual distance.  All randomness flows through named
substreams of the master seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .rng import substream

EARTH_RADIUS_M = 6_371_000.0


class EpochBuildError(RuntimeError):
    """Raised when an epoch's retry budget is exhausted without a graph."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class PlaceRecord:
    place_id: str
    city_id: str
    cluster_label: int
    latitude: float
    longitude: float
    image_ids: tuple[str, ...]

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} out of range for {self.place_id}")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} out of range for {self.place_id}")
        if not self.image_ids:
            raise ValueError(f"place {self.place_id} has no images")
        object.__setattr__(self, "image_ids", tuple(self.image_ids))


@dataclass(frozen=True)
class GraphConfig:
    tau_geo: float = 75.0  # meters
    tau2_quantile: float = 0.5  # 0 keeps every pair
    similar_places: int = 15  # pool size drawn around the anchor
    min_clique_size: int = 10
    temperature: float = 0.25
    knn_cap: int = 10
    normalize_scales: bool = False

    def __post_init__(self):
        if self.tau_geo <= 0:
            raise ValueError("tau_geo must be positive")
        if not 0.0 <= self.tau2_quantile <= 1.0:
            raise ValueError("tau2_quantile must lie in [0, 1]")
        if self.similar_places < 1 or self.min_clique_size < 2 or self.knn_cap < 1:
            raise ValueError("similar_places, min_clique_size, knn_cap out of range")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


@dataclass(frozen=True)
class AffinityGraph:
    """Clique of places with dense pairwise weights and a sparse edge set."""

    nodes: tuple[str, ...]  # place ids
    rep_images: tuple[str, ...]  # one image per place, this epoch's choice
    coords: np.ndarray  # (n, 2) lat/lon degrees
    weights: np.ndarray  # symmetric, zero diagonal, non-positive off-diagonal
    edges: frozenset  # index pairs (i, j), i < j, surviving sparsification
    epoch: int = 0
    source: str = ""

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        n = len(self.nodes)
        if w.shape != (n, n):
            raise ValueError("weight matrix shape does not match node count")
        if not np.allclose(w, w.T):
            raise ValueError("weight matrix must be symmetric")
        if np.any(np.diag(w) != 0.0):
            raise ValueError("weight diagonal must be zero")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=np.float64))

    @property
    def node_count(self) -> int:
        return len(self.nodes)


def geo_distance(a: Sequence[float], b: Sequence[float]) -> float:
    """Equirectangular ground distance in meters between (lat, lon) pairs."""
    lat_a, lon_a = float(a[0]), float(a[1])
    lat_b, lon_b = float(b[0]), float(b[1])
    for lat, lon in ((lat_a, lon_a), (lat_b, lon_b)):
        if not -90.0 <= lat <= 90.0 or not -180.0 <= lon <= 180.0:
            raise ValueError(f"coordinates ({lat}, {lon}) out of range")
    mean_lat = np.radians((lat_a + lat_b) / 2.0)
    dx = EARTH_RADIUS_M * np.radians(lon_b - lon_a) * np.cos(mean_lat)
    dy = EARTH_RADIUS_M * np.radians(lat_b - lat_a)
    return float(np.hypot(dx, dy))


def geo_distance_matrix(coords: np.ndarray) -> np.ndarray:
    coords = np.asarray(coords, dtype=np.float64)
    n = coords.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = geo_distance(coords[i], coords[j])
    return out


def sample_city(
    cities: Sequence[tuple[str, int]], rng: np.random.Generator
) -> str:
    """Draw a city with probability proportional to its cluster count."""
    if not cities:
        raise ValueError("no cities to sample from")
    counts = np.array([c for _, c in cities], dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("all cities have zero clusters")
    idx = rng.choice(len(cities), p=counts / total)
    return cities[idx][0]


def pick_representatives(
    places: Sequence[PlaceRecord],
    embeddings: Mapping[str, np.ndarray],
    rng: np.random.Generator,
) -> list[tuple[str, str, np.ndarray]]:
    """Uniformly pick one stored image descriptor per cluster.

    Returns (place_id, image_id, descriptor) triples, one per place.
    """
    out = []
    for place in places:
        candidates = [img for img in place.image_ids if img in embeddings]
        if not candidates:
            raise ValueError(f"place {place.place_id} has no stored descriptor")
        image_id = candidates[rng.integers(len(candidates))]
        out.append((place.place_id, image_id, np.asarray(embeddings[image_id])))
    return out


def sample_similar_places(
    anchor: np.ndarray,
    pool: Sequence[tuple[str, np.ndarray]],
    count: int,
    temperature: float,
    rng: np.random.Generator,
) -> list[str]:
    """Draw `count` distinct places, biased toward small cosine distance.

    Selection weight is exp(-d_cos / temperature); draws are without
    replacement with renormalization.
    """
    if len(pool) < count:
        raise ValueError(f"pool of {len(pool)} smaller than requested {count}")
    anchor = np.asarray(anchor, dtype=np.float64)
    ids = [pid for pid, _ in pool]
    vecs = np.stack([v for _, v in pool])
    d_cos = 1.0 - vecs @ anchor
    logw = -d_cos / temperature
    logw -= logw.max()
    weights = np.exp(logw)

    chosen: list[str] = []
    alive = np.ones(len(pool), dtype=bool)
    for _ in range(count):
        p = weights * alive
        p = p / p.sum()
        idx = rng.choice(len(pool), p=p)
        alive[idx] = False
        chosen.append(ids[idx])
    return chosen


def build_geo_adjacency(coords: np.ndarray, tau_geo: float) -> np.ndarray:
    """Boolean adjacency: edge iff geographic distance strictly below tau."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.shape[0] < 2:
        raise ValueError("need at least 2 nodes")
    d = geo_distance_matrix(coords)
    adj = d < tau_geo
    np.fill_diagonal(adj, False)
    return adj


def extract_clique(
    adjacency: np.ndarray, min_size: int, rng: np.random.Generator
) -> Optional[list[int]]:
    """First clique of size >= min_size under a seeded node order.

    Pivoting branch-and-bound over maximal cliques with early exit; the
    seeded order randomizes which qualifying clique is found first while
    keeping the result deterministic for a given stream.  Returns None
    when no qualifying clique exists.
    """
    adj = np.asarray(adjacency, dtype=bool)
    n = adj.shape[0]
    if not np.array_equal(adj, adj.T) or np.any(np.diag(adj)):
        raise ValueError("adjacency must be symmetric and loop-free")
    rank = np.empty(n, dtype=int)
    rank[rng.permutation(n)] = np.arange(n)
    neighbors = [frozenset(np.flatnonzero(adj[i]).tolist()) for i in range(n)]
    found: list[Optional[list[int]]] = [None]

    def expand(clique: set, candidates: set, excluded: set):
        if found[0] is not None:
            return
        if len(clique) + len(candidates) < min_size:
            return
        if not candidates and not excluded:
            if len(clique) >= min_size:
                found[0] = sorted(clique)
            return
        pivot = max(
            candidates | excluded,
            key=lambda v: (len(candidates & neighbors[v]), -rank[v]),
        )
        for v in sorted(candidates - neighbors[pivot], key=lambda v: rank[v]):
            expand(clique | {v}, candidates & neighbors[v], excluded & neighbors[v])
            if found[0] is not None:
                return
            candidates = candidates - {v}
            excluded = excluded | {v}

    expand(set(), set(range(n)), set())
    return found[0]


def affinity_graph(
    place_ids: Sequence[str],
    descriptors: np.ndarray,
    coords: np.ndarray,
    tau2_quantile: float,
    knn_cap: int,
    epoch: int = 0,
    rep_images: Optional[Sequence[str]] = None,
    source: str = "",
    normalize_scales: bool = False,
) -> AffinityGraph:
    """Weight a clique's pairs by -(d_geo * d_vis) and sparsify.

    The threshold is realized as the given quantile of the off-diagonal
    weights (quantile 0 keeps every pair); surviving edges are then
    capped to each node's knn_cap strongest neighbors, an edge being kept
    if it survives the cap at either endpoint.
    """
    n = len(place_ids)
    if n < 2:
        raise ValueError("affinity graph needs at least 2 nodes")
    vecs = np.asarray(descriptors, dtype=np.float64)
    d_vis = np.linalg.norm(vecs[:, None, :] - vecs[None, :, :], axis=2)
    d_geo = geo_distance_matrix(coords)
    if normalize_scales:
        for d in (d_vis, d_geo):
            peak = d.max()
            if peak > 0:
                d /= peak
    weights = -(d_geo * d_vis)
    np.fill_diagonal(weights, 0.0)

    iu, ju = np.triu_indices(n, k=1)
    off = weights[iu, ju]
    threshold = -np.inf if tau2_quantile == 0.0 else float(np.quantile(off, tau2_quantile))
    candidate = weights > threshold
    np.fill_diagonal(candidate, False)

    keep = np.zeros_like(candidate)
    for i in range(n):
        nbrs = np.flatnonzero(candidate[i])
        if nbrs.size > knn_cap:
            strongest = nbrs[np.argsort(-weights[i, nbrs], kind="stable")[:knn_cap]]
        else:
            strongest = nbrs
        keep[i, strongest] = True
    edges = frozenset(
        (int(i), int(j)) for i, j in zip(iu, ju) if keep[i, j] or keep[j, i]
    )
    return AffinityGraph(
        nodes=tuple(place_ids),
        rep_images=tuple(rep_images) if rep_images is not None else tuple("" for _ in place_ids),
        coords=np.asarray(coords, dtype=np.float64),
        weights=weights,
        edges=edges,
        epoch=epoch,
        source=source,
    )


def rebuild_epoch(
    manifest: Sequence[PlaceRecord],
    embeddings: Mapping[str, np.ndarray],
    config: GraphConfig,
    master_seed: int,
    epoch: int,
    graphs_per_epoch: int = 4,
    max_retries: int = 50,
    source: str = "",
    stream_epoch: Optional[int] = None,
) -> list[AffinityGraph]:
    """Build the epoch's affinity graphs, fully determined by (seed, epoch).

    Repeats city sampling / representative drawing / similar-place
    pooling / geo-adjacency / clique extraction until graphs_per_epoch
    graphs exist or the retry budget runs out.  stream_epoch pins the
    random substreams to a fixed epoch index, which isolates embedding
    drift from per-epoch resampling in controlled comparisons.
    """
    by_city: dict[str, list[PlaceRecord]] = {}
    for place in manifest:
        by_city.setdefault(place.city_id, []).append(place)
    cities = sorted((c, len(ps)) for c, ps in by_city.items())
    eligible = [(c, k) for c, k in cities if k >= config.similar_places + 1]
    if not eligible:
        raise EpochBuildError(
            "sample_city",
            f"no city has the {config.similar_places + 1} clusters needed",
        )

    graphs: list[AffinityGraph] = []
    failures = {"extract_clique": 0}
    for attempt in range(max_retries):
        if len(graphs) >= graphs_per_epoch:
            break
        tag = (epoch if stream_epoch is None else stream_epoch, attempt)
        city = sample_city(eligible, substream(master_seed, source, "city", *tag))
        places = sorted(by_city[city], key=lambda p: p.place_id)
        reps = pick_representatives(
            places, embeddings, substream(master_seed, source, "rep", *tag)
        )
        rep_by_place = {pid: (img, vec) for pid, img, vec in reps}

        anchor_rng = substream(master_seed, source, "anchor", *tag)
        anchor_idx = int(anchor_rng.integers(len(reps)))
        anchor_pid, _, anchor_vec = reps[anchor_idx]
        pool = [(pid, vec) for pid, _, vec in reps if pid != anchor_pid]
        similar = sample_similar_places(
            anchor_vec,
            pool,
            config.similar_places,
            config.temperature,
            substream(master_seed, source, "similar", *tag),
        )

        node_ids = [anchor_pid] + similar
        place_by_id = {p.place_id: p for p in places}
        coords = np.array(
            [(place_by_id[pid].latitude, place_by_id[pid].longitude) for pid in node_ids]
        )
        adjacency = build_geo_adjacency(coords, config.tau_geo)
        clique = extract_clique(
            adjacency,
            config.min_clique_size,
            substream(master_seed, source, "clique", *tag),
        )
        if clique is None:
            failures["extract_clique"] += 1
            continue

        clique_ids = [node_ids[i] for i in clique]
        graphs.append(
            affinity_graph(
                clique_ids,
                np.stack([rep_by_place[pid][1] for pid in clique_ids]),
                coords[clique],
                config.tau2_quantile,
                config.knn_cap,
                epoch=epoch,
                rep_images=[rep_by_place[pid][0] for pid in clique_ids],
                source=source,
                normalize_scales=config.normalize_scales,
            )
        )
    if not graphs:
        bottleneck = max(failures, key=failures.get)
        raise EpochBuildError(
            bottleneck,
            f"retry budget of {max_retries} exhausted with zero graphs "
            f"({failures[bottleneck]} failures at {bottleneck})",
        )
    return graphs


def dump_graph_debug(graphs: Sequence[AffinityGraph]) -> str:
    """Line-based debug dump: epoch,node_i,node_j,d_geo,d_vis,W per pair."""
    lines = ["epoch,node_i,node_j,d_geo,d_vis,W"]
    for g in graphs:
        for i in range(g.node_count):
            for j in range(i + 1, g.node_count):
                dg = geo_distance(g.coords[i], g.coords[j])
                w = g.weights[i, j]
                dv = -w / dg if dg > 0 else 0.0
                lines.append(
                    f"{g.epoch},{g.nodes[i]},{g.nodes[j]},{dg:.6f},{dv:.6f},{w:.6f}"
                )
    return "\n".join(lines) + "\n"
