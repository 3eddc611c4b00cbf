"""Synthetic geo-visual dataset with per-epoch embedding drift.

Stands in for a neural backbone: cities are placed far apart, clusters
sit on a metric grid, each cluster gets a unit prototype descriptor, and
images are noisy copies of their prototype.  Epoch e rotates every
prototype by e * drift_rate radians in one fixed, seeded 2-plane of
descriptor space, so consecutive-epoch embeddings drift apart at a
controlled rate while per-image noise stays frozen across epochs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import substream

# 1 degree of latitude in meters under the equirectangular model.
_METERS_PER_DEG_LAT = 6_371_000.0 * math.pi / 180.0


@dataclass(frozen=True)
class SynthConfig:
    cities: int = 4
    clusters_per_city: int = 30
    images_per_cluster: int = 6
    cluster_spacing: float = 50.0  # meters
    descriptor_dim: int = 32
    drift_rate: float = 0.0  # radians per epoch
    noise_sigma: float = 0.05
    master_seed: int = 0

    def __post_init__(self):
        if min(self.cities, self.clusters_per_city, self.images_per_cluster) < 1:
            raise ValueError("counts must be at least 1")
        if self.descriptor_dim < 2:
            raise ValueError("descriptor_dim must be at least 2 (drift needs a 2-plane)")
        if self.drift_rate < 0 or self.noise_sigma < 0:
            raise ValueError("drift_rate and noise_sigma must be non-negative")
        if self.cluster_spacing <= 0:
            raise ValueError("cluster_spacing must be positive")


def _rotation_plane(dim: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Fixed seeded orthonormal pair spanning the drift plane."""
    rng = substream(seed, "drift_plane")
    u = rng.standard_normal(dim)
    u /= np.linalg.norm(u)
    v = rng.standard_normal(dim)
    v -= (v @ u) * u
    v /= np.linalg.norm(v)
    return u, v


def _rotate(vectors: np.ndarray, u: np.ndarray, v: np.ndarray, angle: float) -> np.ndarray:
    """Rotate by `angle` in the (u, v) plane, identity elsewhere."""
    cu = vectors @ u
    cv = vectors @ v
    residual = vectors - np.outer(cu, u) - np.outer(cv, v)
    ru = cu * math.cos(angle) - cv * math.sin(angle)
    rv = cu * math.sin(angle) + cv * math.cos(angle)
    return residual + np.outer(ru, u) + np.outer(rv, v)


def synth_manifest_rows(config: SynthConfig) -> list[dict]:
    """Manifest rows for the synthetic layout (geometry only, no vectors).

    Cities sit 1 degree of latitude apart (>= 100 km); clusters form a
    square-ish grid with cluster_spacing meters between neighbors.
    """
    rows = []
    grid = math.ceil(math.sqrt(config.clusters_per_city))
    dlat = config.cluster_spacing / _METERS_PER_DEG_LAT
    for c in range(config.cities):
        base_lat = c * 1.0  # ~111 km separation between cities
        for k in range(config.clusters_per_city):
            gx, gy = k % grid, k // grid
            # Longitude step scaled so ground spacing matches at this latitude.
            dlon = dlat / max(math.cos(math.radians(base_lat)), 1e-9)
            lat = base_lat + gy * dlat
            lon = gx * dlon
            for i in range(config.images_per_cluster):
                rows.append(
                    {
                        "id": f"c{c}_k{k}_i{i}",
                        "city": f"city{c}",
                        "cluster": str(k),
                        "lat": f"{lat:.10f}",
                        "lon": f"{lon:.10f}",
                        "azimuth_deg": "",
                        "frame_idx": "",
                        "pair_id": "",
                    }
                )
    return rows


def synth_epoch_embeddings(config: SynthConfig, epoch: int) -> dict[str, np.ndarray]:
    """Unit descriptors for every image at the given epoch.

    Image vector = normalize(rotate(prototype, epoch * drift_rate) + frozen
    per-image noise); drift_rate = 0 therefore reproduces identical stores
    across epochs.
    """
    dim = config.descriptor_dim
    u, v = _rotation_plane(dim, config.master_seed)
    angle = epoch * config.drift_rate

    embeddings: dict[str, np.ndarray] = {}
    for c in range(config.cities):
        for k in range(config.clusters_per_city):
            proto_rng = substream(config.master_seed, "prototype", c, k)
            proto = proto_rng.standard_normal(dim)
            proto /= np.linalg.norm(proto)
            proto = _rotate(proto[None, :], u, v, angle)[0]
            for i in range(config.images_per_cluster):
                noise_rng = substream(config.master_seed, "noise", c, k, i)
                vec = proto + config.noise_sigma * noise_rng.standard_normal(dim)
                embeddings[f"c{c}_k{k}_i{i}"] = vec / np.linalg.norm(vec)
    return embeddings


def synth_generate(config: SynthConfig, epochs: int = 1) -> tuple[list[dict[str, np.ndarray]], list[dict]]:
    """Per-epoch embedding maps plus the shared manifest rows."""
    rows = synth_manifest_rows(config)
    stores = [synth_epoch_embeddings(config, e) for e in range(epochs)]
    return stores, rows
