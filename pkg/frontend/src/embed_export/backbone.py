"""Vision backbones producing patch tokens and a global token.

The built-in "patchstats" backbone computes deterministic per-patch
color and gradient statistics over a fixed grid. It needs no downloaded
weights, which keeps exports reproducible in offline environments and
gives tests a stable reference. Heavier pretrained backbones can be
registered at runtime via `register_backbone`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np
from PIL import Image


@dataclass(frozen=True)
class Embedded:
    """Patch tokens (L, M) and a global token (M,) for one image."""

    patches: np.ndarray
    token: np.ndarray


class Backbone(Protocol):
    patch_count: int
    dim: int

    def embed(self, image: np.ndarray) -> Embedded: ...


def _stats(block: np.ndarray) -> np.ndarray:
    """12 features per block: channel means, stds, mean |dx|, mean |dy|."""
    means = block.mean(axis=(0, 1))
    stds = block.std(axis=(0, 1))
    dx = np.abs(np.diff(block, axis=1)).mean(axis=(0, 1))
    dy = np.abs(np.diff(block, axis=0)).mean(axis=(0, 1))
    return np.concatenate([means, stds, dx, dy])


class PatchStatsBackbone:
    """Grid of color/gradient statistics: L = grid*grid patches of 12 dims."""

    def __init__(self, grid: int = 6):
        if grid <= 1:
            raise ValueError("grid must be at least 2")
        self.grid = grid
        self.patch_count = grid * grid
        self.dim = 12

    def embed(self, image: np.ndarray) -> Embedded:
        h, w, _ = image.shape
        rows = np.linspace(0, h, self.grid + 1, dtype=int)
        cols = np.linspace(0, w, self.grid + 1, dtype=int)
        patches = np.empty((self.patch_count, self.dim), dtype=np.float32)
        k = 0
        for r in range(self.grid):
            for c in range(self.grid):
                patches[k] = _stats(image[rows[r]:rows[r + 1], cols[c]:cols[c + 1]])
                k += 1
        return Embedded(patches=patches, token=_stats(image).astype(np.float32))


_REGISTRY: dict[str, Callable[[], Backbone]] = {
    "patchstats": PatchStatsBackbone,
}


def register_backbone(name: str, factory: Callable[[], Backbone]) -> None:
    _REGISTRY[name] = factory


def get_backbone(name: str) -> Backbone:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise ValueError(
            f"unknown backbone {name!r}; available: {sorted(_REGISTRY)}"
        ) from None


def load_image(path, resize_edge: int) -> np.ndarray:
    """Decode, resize shorter edge to resize_edge, center-crop to square.

    Returns float32 RGB in [0, 1] of shape (resize_edge, resize_edge, 3).
    """
    if resize_edge <= 0:
        raise ValueError("resize_edge must be positive")
    with Image.open(path) as img:
        img = img.convert("RGB")
        w, h = img.size
        scale = resize_edge / min(w, h)
        img = img.resize(
            (max(resize_edge, round(w * scale)), max(resize_edge, round(h * scale))),
            Image.BILINEAR,
        )
        w, h = img.size
        left = (w - resize_edge) // 2
        top = (h - resize_edge) // 2
        img = img.crop((left, top, left + resize_edge, top + resize_edge))
        return np.asarray(img, dtype=np.float32) / 255.0
