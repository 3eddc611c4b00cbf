"""Patch-descriptor modulation and bilinear aggregation.

Implements the residual soft-probing reweighting of local descriptors,
the variance-growth estimate that motivates it, and the second-order
(Gram-like) aggregation into a fixed-length global descriptor.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import erf, expit


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


_ACTIVATIONS = {
    "relu": lambda x: np.maximum(x, 0.0),
    "gelu": _gelu,
    "identity": lambda x: x,
}


@dataclass(frozen=True)
class TwoLayerMLP:
    """Dense two-layer network: in_dim -> hidden -> out_dim."""

    w1: np.ndarray  # (hidden, in_dim)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (out_dim, hidden)
    b2: np.ndarray  # (out_dim,)
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        for name, w in (("w1", self.w1), ("b1", self.b1), ("w2", self.w2), ("b2", self.b2)):
            if not np.all(np.isfinite(w)):
                raise ValueError(f"non-finite weights in {name}")
        if self.w1.shape[0] != self.b1.shape[0] or self.w2.shape[1] != self.w1.shape[0]:
            raise ValueError("inconsistent layer shapes")
        if self.w2.shape[0] != self.b2.shape[0]:
            raise ValueError("inconsistent output shapes")

    @property
    def in_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Apply to rows of x, shape (n, in_dim) -> (n, out_dim)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.in_dim:
            raise ValueError(
                f"input dim {x.shape[1]} does not match network in_dim {self.in_dim}"
            )
        h = _ACTIVATIONS[self.activation](x @ self.w1.T + self.b1)
        return h @ self.w2.T + self.b2


def random_mlp(
    rng: np.random.Generator,
    in_dim: int,
    hidden: int,
    out_dim: int,
    activation: str = "relu",
) -> TwoLayerMLP:
    """Seeded Gaussian init with fan-in scaling (no training here)."""
    w1 = rng.standard_normal((hidden, in_dim)) / np.sqrt(in_dim)
    w2 = rng.standard_normal((out_dim, hidden)) / np.sqrt(hidden)
    return TwoLayerMLP(
        w1=w1,
        b1=np.zeros(hidden),
        w2=w2,
        b2=np.zeros(out_dim),
        activation=activation,
    )


@dataclass(frozen=True)
class PatchDescriptorSet:
    """L x M matrix of local patch descriptors for one image."""

    descriptors: np.ndarray
    image_id: str = ""

    def __post_init__(self):
        d = np.asarray(self.descriptors)
        if d.ndim != 2 or d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError("descriptors must be a non-empty 2-D matrix")
        bad = np.flatnonzero(~np.all(np.isfinite(d), axis=1))
        if bad.size:
            raise ValueError(
                f"non-finite descriptor entries in row {bad[0]}"
                + (f" of image {self.image_id!r}" if self.image_id else "")
            )
        object.__setattr__(self, "descriptors", d.astype(np.float64, copy=False))

    @property
    def patch_count(self) -> int:
        return self.descriptors.shape[0]

    @property
    def dim(self) -> int:
        return self.descriptors.shape[1]


@dataclass(frozen=True)
class SoftPParams:
    """Bounded residual reweighting parameters.

    alpha caps the per-patch coefficient; phi maps the patch norm to a
    pre-sigmoid logit (scalar in, scalar out).
    """

    alpha: float = 1.0
    epsilon: float = 1e-6
    phi: TwoLayerMLP = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.phi is None:
            raise ValueError("phi network required")
        if self.phi.in_dim != 1 or self.phi.out_dim != 1:
            raise ValueError("phi must map a scalar to a scalar")


def default_softp_params(
    seed: int = 0, alpha: float = 1.0, epsilon: float = 1e-6, hidden: int = 16
) -> SoftPParams:
    rng = np.random.default_rng(seed)
    return SoftPParams(alpha=alpha, epsilon=epsilon, phi=random_mlp(rng, 1, hidden, 1))


@dataclass(frozen=True)
class AggregationParams:
    """Bilinear aggregation branches: compress M->D, probe M->K.

    token_proj, when present, maps the class token to a T-vector that is
    appended after the flattened D x K bilinear block.
    """

    compress: TwoLayerMLP
    probe: TwoLayerMLP
    token_proj: Optional[TwoLayerMLP] = None

    def __post_init__(self):
        if self.compress.in_dim != self.probe.in_dim:
            raise ValueError("compress and probe must share the input dimension")
        if self.token_proj is not None and self.token_proj.in_dim != self.compress.in_dim:
            raise ValueError("token_proj input dimension mismatch")

    @property
    def output_dim(self) -> int:
        d = self.compress.out_dim * self.probe.out_dim
        if self.token_proj is not None:
            d += self.token_proj.out_dim
        return d


def default_aggregation_params(
    patch_dim: int,
    compress_dim: int = 128,
    probe_dim: int = 64,
    token_dim: Optional[int] = 256,
    seed: int = 0,
) -> AggregationParams:
    rng = np.random.default_rng(seed)
    token_proj = None
    if token_dim is not None:
        token_proj = random_mlp(rng, patch_dim, token_dim, token_dim)
    return AggregationParams(
        compress=random_mlp(rng, patch_dim, compress_dim, compress_dim),
        probe=random_mlp(rng, patch_dim, probe_dim, probe_dim),
        token_proj=token_proj,
    )


@dataclass(frozen=True)
class GlobalDescriptor:
    """Fixed-length aggregated vector for one image."""

    vector: np.ndarray
    image_id: str = ""
    normalized: bool = False

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64)
        if v.ndim != 1:
            raise ValueError("descriptor vector must be 1-D")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"non-finite descriptor entries for image {self.image_id!r}")
        if self.normalized and abs(np.linalg.norm(v) - 1.0) > 1e-6:
            raise ValueError("normalized flag set but norm differs from 1")
        object.__setattr__(self, "vector", v)

    def __len__(self) -> int:
        return self.vector.shape[0]


def softp_modulate(
    x: PatchDescriptorSet, params: SoftPParams
) -> tuple[PatchDescriptorSet, np.ndarray]:
    """Residually reweight each patch by a bounded, norm-driven coefficient.

    Returns the modulated set and the per-patch coefficient vector beta,
    with 0 <= beta_i <= alpha guaranteed by the sigmoid squashing.
    """
    norms = np.linalg.norm(x.descriptors, axis=1) + params.epsilon
    logits = params.phi.apply(norms[:, None])[:, 0]
    beta = params.alpha * expit(logits)
    modulated = (1.0 + beta)[:, None] * x.descriptors
    return PatchDescriptorSet(modulated, image_id=x.image_id), beta


def variance_shift_estimate(
    x: PatchDescriptorSet, beta: np.ndarray
) -> tuple[float, float]:
    """Exact variance of the modulated set vs. its first-order estimate.

    estimate = (1/L) sum_i (1 + 2 beta_i) ||X_i - mean(X)||^2, which drops
    the beta^2 term and the shift of the mean; both values are returned so
    callers can inspect the gap.
    """
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (x.patch_count,):
        raise ValueError("beta length must equal the patch count")
    if x.patch_count < 2:
        raise ValueError("variance undefined for fewer than 2 patches")
    centered = x.descriptors - x.descriptors.mean(axis=0)
    sq = np.sum(centered**2, axis=1)
    estimate = float(np.mean((1.0 + 2.0 * beta) * sq))

    modulated = (1.0 + beta)[:, None] * x.descriptors
    mod_centered = modulated - modulated.mean(axis=0)
    exact = float(np.mean(np.sum(mod_centered**2, axis=1)))
    return exact, estimate


def cfp_aggregate(
    x_mod: PatchDescriptorSet,
    class_token: Optional[np.ndarray],
    params: AggregationParams,
) -> GlobalDescriptor:
    """Second-order bilinear aggregation of modulated patch descriptors.

    The bilinear block is (1/L) compress(X)^T probe(X), a D x K matrix
    flattened row-major; the patch-count division keeps the scale
    independent of L.  Output is not yet normalized.
    """
    if x_mod.dim != params.compress.in_dim:
        raise ValueError(
            f"patch dim {x_mod.dim} does not match aggregation input dim "
            f"{params.compress.in_dim}"
        )
    c = params.compress.apply(x_mod.descriptors)  # (L, D)
    p = params.probe.apply(x_mod.descriptors)  # (L, K)
    bilinear = (c.T @ p) / x_mod.patch_count  # (D, K)
    parts = [bilinear.ravel(order="C")]
    if class_token is not None:
        if params.token_proj is None:
            raise ValueError("class token given but no token projection configured")
        parts.append(params.token_proj.apply(np.asarray(class_token)[None, :])[0])
    return GlobalDescriptor(np.concatenate(parts), image_id=x_mod.image_id)


def l2_normalize(f: GlobalDescriptor) -> GlobalDescriptor:
    """Scale to unit Euclidean norm; rejects the zero vector."""
    norm = np.linalg.norm(f.vector)
    if norm == 0.0:
        raise ValueError("cannot normalize a zero descriptor")
    return replace(f, vector=f.vector / norm, normalized=True)
