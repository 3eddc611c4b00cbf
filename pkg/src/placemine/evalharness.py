"""Benchmark-protocol retrieval evaluation.

Top-N retrieval over normalized descriptors, the standard geographic /
azimuth / frame / pair match criteria, Recall@N, intra-class distance
metrics, and PCA compaction of descriptors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .geograph import geo_distance

PCA_DIM_PRESETS = (128, 256, 512, 1024, 2048, 3072, 4096)


@dataclass(frozen=True)
class MatchCriterion:
    """One benchmark's notion of a geographically correct retrieval."""

    variant: str
    radius_m: float = 0.0
    azimuth_deg: float = 0.0
    max_frames: int = 0

    _VARIANTS = ("radius", "radius_azimuth", "frame_offset", "unique_pair")

    def __post_init__(self):
        if self.variant not in self._VARIANTS:
            raise ValueError(f"unknown criterion variant {self.variant!r}")
        if self.variant in ("radius", "radius_azimuth") and self.radius_m <= 0:
            raise ValueError("radius must be positive")
        if self.variant == "radius_azimuth" and not 0 < self.azimuth_deg <= 180:
            raise ValueError("azimuth tolerance must lie in (0, 180]")
        if self.variant == "frame_offset" and self.max_frames < 0:
            raise ValueError("max_frames must be non-negative")

    @classmethod
    def radius(cls, meters: float = 25.0) -> "MatchCriterion":
        return cls("radius", radius_m=meters)

    @classmethod
    def radius_azimuth(cls, meters: float = 25.0, degrees: float = 40.0) -> "MatchCriterion":
        return cls("radius_azimuth", radius_m=meters, azimuth_deg=degrees)

    @classmethod
    def frame_offset(cls, max_frames: int = 10) -> "MatchCriterion":
        return cls("frame_offset", max_frames=max_frames)

    @classmethod
    def unique_pair(cls) -> "MatchCriterion":
        return cls("unique_pair")


@dataclass(frozen=True)
class ItemMeta:
    """Per-image metadata; fields beyond the criterion's needs may be None."""

    item_id: str
    latitude: Optional[float] = None
    longitude: Optional[float] = None
    azimuth_deg: Optional[float] = None
    frame_idx: Optional[int] = None
    pair_id: Optional[str] = None


@dataclass(frozen=True)
class RetrievalIndex:
    descriptors: np.ndarray  # (n, d), unit rows
    metadata: tuple[ItemMeta, ...]

    def __post_init__(self):
        d = np.asarray(self.descriptors, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != len(self.metadata):
            raise ValueError("descriptor count must match metadata count")
        norms = np.linalg.norm(d, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-5):
            raise ValueError("index descriptors must be normalized")
        object.__setattr__(self, "descriptors", d)

    def __len__(self) -> int:
        return self.descriptors.shape[0]


def retrieve_top_n(query: np.ndarray, index: RetrievalIndex, n: int) -> list[int]:
    """Database indices sorted by ascending Euclidean distance, ties by id."""
    if len(index) == 0:
        raise ValueError("empty retrieval index")
    if n < 1:
        raise ValueError("n must be at least 1")
    q = np.asarray(query, dtype=np.float64)
    dists = np.linalg.norm(index.descriptors - q, axis=1)
    order = np.lexsort((np.arange(len(index)), dists))
    return order[:n].tolist()


def _wrapped_angle_diff(a: float, b: float) -> float:
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


def _require(meta: ItemMeta, *fields: str) -> None:
    for f in fields:
        if getattr(meta, f) is None:
            raise ValueError(f"metadata for {meta.item_id!r} is missing field {f!r}")


def is_match(query: ItemMeta, db: ItemMeta, criterion: MatchCriterion) -> bool:
    """Whether a database item counts as correct under the criterion.

    All thresholds are inclusive: a hit at exactly the radius matches.
    """
    if criterion.variant == "radius":
        _require(query, "latitude", "longitude")
        _require(db, "latitude", "longitude")
        return (
            geo_distance((query.latitude, query.longitude), (db.latitude, db.longitude))
            <= criterion.radius_m
        )
    if criterion.variant == "radius_azimuth":
        _require(query, "latitude", "longitude", "azimuth_deg")
        _require(db, "latitude", "longitude", "azimuth_deg")
        close = (
            geo_distance((query.latitude, query.longitude), (db.latitude, db.longitude))
            <= criterion.radius_m
        )
        return close and _wrapped_angle_diff(query.azimuth_deg, db.azimuth_deg) <= criterion.azimuth_deg
    if criterion.variant == "frame_offset":
        _require(query, "frame_idx")
        _require(db, "frame_idx")
        return abs(query.frame_idx - db.frame_idx) <= criterion.max_frames
    # unique_pair
    _require(query, "pair_id")
    return db.item_id == query.pair_id


def recall_at_n(
    queries: Sequence[tuple[np.ndarray, ItemMeta]],
    index: RetrievalIndex,
    criterion: MatchCriterion,
    n_list: Sequence[int],
) -> dict[int, float]:
    """Fraction of queries with >= 1 correct item among the top N, per N."""
    if not queries:
        raise ValueError("no queries")
    n_max = max(n_list)
    hits = {n: 0 for n in n_list}
    for vec, meta in queries:
        ranked = retrieve_top_n(vec, index, n_max)
        first_hit = None
        for pos, db_idx in enumerate(ranked):
            if is_match(meta, index.metadata[db_idx], criterion):
                first_hit = pos
                break
        if first_hit is not None:
            for n in n_list:
                if first_hit < n:
                    hits[n] += 1
    return {n: hits[n] / len(queries) for n in n_list}


def aid_metric(
    features_by_class: Mapping[str, np.ndarray]
) -> tuple[dict[str, float], float]:
    """Intra-class distance per class and its average over classes.

    ID_i is the mean Euclidean distance of a class's features to their
    centroid; AID averages ID over classes.
    """
    if not features_by_class:
        raise ValueError("no classes given")
    ids: dict[str, float] = {}
    for label in sorted(features_by_class):
        feats = np.asarray(features_by_class[label], dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] < 1:
            raise ValueError(f"class {label!r} has no features")
        centroid = feats.mean(axis=0)
        ids[label] = float(np.mean(np.linalg.norm(feats - centroid, axis=1)))
    return ids, float(np.mean(list(ids.values())))


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (output_dim, input_dim), orthonormal rows
    explained_variance: np.ndarray
    whiten: bool = False

    def __post_init__(self):
        gram = self.components @ self.components.T
        if not np.allclose(gram, np.eye(self.components.shape[0]), atol=1e-6):
            raise ValueError("PCA components must be orthonormal")

    @property
    def output_dim(self) -> int:
        return self.components.shape[0]


def pca_fit(vectors: np.ndarray, output_dim: int, whiten: bool = False) -> PcaModel:
    """Fit by eigen-decomposition of the centered covariance."""
    x = np.asarray(vectors, dtype=np.float64)
    if output_dim < 1 or output_dim > x.shape[1]:
        raise ValueError(f"output_dim {output_dim} out of range for dim {x.shape[1]}")
    if x.shape[0] < output_dim:
        raise ValueError("need at least output_dim training vectors")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / max(x.shape[0] - 1, 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:output_dim]
    return PcaModel(
        mean=mean,
        components=eigvecs[:, order].T,
        explained_variance=np.maximum(eigvals[order], 0.0),
        whiten=whiten,
    )


def pca_project(model: PcaModel, vectors: np.ndarray, renormalize: bool = True) -> np.ndarray:
    """Project, optionally whiten, and re-normalize to unit length."""
    x = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    proj = (x - model.mean) @ model.components.T
    if model.whiten:
        proj = proj / np.sqrt(model.explained_variance + 1e-12)
    if renormalize:
        norms = np.linalg.norm(proj, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        proj = proj / norms
    return proj


def format_results(
    recall_rows: Sequence[tuple[str, str, int, float]],
    aid_rows: Sequence[tuple[str, float]] = (),
) -> str:
    """Stable plain-text results file: recall lines then an AID section."""
    lines = ["dataset,criterion,N,recall"]
    for dataset, criterion, n, value in recall_rows:
        lines.append(f"{dataset},{criterion},{n},{value:.6f}")
    if aid_rows:
        lines.append("# AID")
        lines.append("group,aid")
        for group, value in aid_rows:
            lines.append(f"{group},{value:.6f}")
    return "\n".join(lines) + "\n"
