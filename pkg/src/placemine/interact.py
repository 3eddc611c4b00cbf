"""Cross-image segment attention over a batch of global descriptors.

Descriptors are deterministically split into fixed-length segments; for
each segment index the segments of all B images form one sequence, which
a small two-layer pre-norm attention encoder refines.  Tokens carry no
positional encoding along the batch axis, so the forward pass is
equivariant under permutations of the images.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .descriptors import GlobalDescriptor, _gelu


@dataclass(frozen=True)
class SegmentLayout:
    segment_count: int
    segment_length: int

    def __post_init__(self):
        if self.segment_count < 1 or self.segment_length < 1:
            raise ValueError("segment counts and lengths must be positive")

    @property
    def total_length(self) -> int:
        return self.segment_count * self.segment_length

    @classmethod
    def for_descriptor(cls, total_length: int, segment_length: int = 768) -> "SegmentLayout":
        if total_length % segment_length != 0:
            raise ValueError(
                f"descriptor length {total_length} is not a multiple of "
                f"segment length {segment_length}"
            )
        return cls(total_length // segment_length, segment_length)


@dataclass(frozen=True)
class EncoderLayerParams:
    """One pre-norm encoder layer: attention + GELU feed-forward."""

    wq: np.ndarray  # (d, d)
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    bq: np.ndarray
    bk: np.ndarray
    bv: np.ndarray
    bo: np.ndarray
    w_ff1: np.ndarray  # (ff, d)
    b_ff1: np.ndarray
    w_ff2: np.ndarray  # (d, ff)
    b_ff2: np.ndarray
    ln1_gamma: np.ndarray
    ln1_beta: np.ndarray
    ln2_gamma: np.ndarray
    ln2_beta: np.ndarray


@dataclass(frozen=True)
class EncoderParams:
    model_dim: int
    head_count: int
    ff_dim: int
    layers: tuple[EncoderLayerParams, ...]

    def __post_init__(self):
        if self.model_dim % self.head_count != 0:
            raise ValueError("model_dim must be divisible by head_count")
        for i, layer in enumerate(self.layers):
            for name in layer.__dataclass_fields__:
                if not np.all(np.isfinite(getattr(layer, name))):
                    raise ValueError(f"non-finite weights in layer {i} field {name}")


def random_encoder_params(
    model_dim: int = 768,
    head_count: int = 16,
    ff_dim: int = 1024,
    n_layers: int = 2,
    seed: int = 0,
    scale: float = 0.02,
) -> EncoderParams:
    rng = np.random.default_rng(seed)
    layers = []
    for _ in range(n_layers):
        sq = lambda: rng.standard_normal((model_dim, model_dim)) * scale
        layers.append(
            EncoderLayerParams(
                wq=sq(), wk=sq(), wv=sq(), wo=sq(),
                bq=np.zeros(model_dim), bk=np.zeros(model_dim),
                bv=np.zeros(model_dim), bo=np.zeros(model_dim),
                w_ff1=rng.standard_normal((ff_dim, model_dim)) * scale,
                b_ff1=np.zeros(ff_dim),
                w_ff2=rng.standard_normal((model_dim, ff_dim)) * scale,
                b_ff2=np.zeros(model_dim),
                ln1_gamma=np.ones(model_dim), ln1_beta=np.zeros(model_dim),
                ln2_gamma=np.ones(model_dim), ln2_beta=np.zeros(model_dim),
            )
        )
    return EncoderParams(model_dim, head_count, ff_dim, tuple(layers))


def segment_and_rearrange(
    descriptors: Sequence[GlobalDescriptor] | np.ndarray, layout: SegmentLayout
) -> np.ndarray:
    """Split B descriptors into S sequences of B segment tokens.

    Output shape (S, B, segment_length); sequence s token b is segment s
    of image b.  Lossless: restore_layout inverts exactly.
    """
    if isinstance(descriptors, np.ndarray):
        mat = np.atleast_2d(descriptors)
    else:
        for d in descriptors:
            if len(d) != layout.total_length:
                raise ValueError(
                    f"descriptor for image {d.image_id!r} has length {len(d)}, "
                    f"layout expects {layout.total_length}"
                )
        mat = np.stack([d.vector for d in descriptors])
    if mat.shape[1] != layout.total_length:
        raise ValueError(
            f"descriptor length {mat.shape[1]} does not match layout "
            f"total {layout.total_length}"
        )
    b = mat.shape[0]
    # (B, S, seg) -> (S, B, seg)
    return mat.reshape(b, layout.segment_count, layout.segment_length).transpose(1, 0, 2)


def restore_layout(sequences: np.ndarray, layout: SegmentLayout) -> np.ndarray:
    """Invert segment_and_rearrange; returns a (B, total_length) matrix."""
    seqs = np.asarray(sequences)
    if seqs.ndim != 3 or seqs.shape[0] != layout.segment_count or seqs.shape[2] != layout.segment_length:
        raise ValueError(
            f"sequence shape {seqs.shape} inconsistent with layout "
            f"(S={layout.segment_count}, seg={layout.segment_length})"
        )
    b = seqs.shape[1]
    return seqs.transpose(1, 0, 2).reshape(b, layout.total_length)


def _layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gamma + beta


def _attention(
    x: np.ndarray, layer: EncoderLayerParams, head_count: int
) -> tuple[np.ndarray, np.ndarray]:
    """Multi-head self-attention over the token axis of x (B, d).

    Returns (output, weights) with weights shaped (heads, B, B).
    """
    b, d = x.shape
    dh = d // head_count
    q = (x @ layer.wq.T + layer.bq).reshape(b, head_count, dh).transpose(1, 0, 2)
    k = (x @ layer.wk.T + layer.bk).reshape(b, head_count, dh).transpose(1, 0, 2)
    v = (x @ layer.wv.T + layer.bv).reshape(b, head_count, dh).transpose(1, 0, 2)
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(dh)  # (heads, B, B)
    scores -= scores.max(axis=-1, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=-1, keepdims=True)
    ctx = (weights @ v).transpose(1, 0, 2).reshape(b, d)
    return ctx @ layer.wo.T + layer.bo, weights


def encoder_forward(
    sequences: np.ndarray,
    params: EncoderParams,
    return_attention: bool = False,
) -> np.ndarray | tuple[np.ndarray, list[list[np.ndarray]]]:
    """Run the two-layer pre-norm encoder over each sequence independently.

    sequences: (S, B, model_dim).  Attention mixes the B tokens of one
    sequence; sequences never interact.  With return_attention=True the
    per-layer, per-sequence attention weights are also returned.
    """
    seqs = np.asarray(sequences, dtype=np.float64)
    if seqs.ndim != 3 or seqs.shape[2] != params.model_dim:
        raise ValueError(
            f"token length {seqs.shape[-1]} does not match model_dim {params.model_dim}"
        )
    out = np.empty_like(seqs)
    attn_all: list[list[np.ndarray]] = []
    for s in range(seqs.shape[0]):
        x = seqs[s]
        attn_seq = []
        for li, layer in enumerate(params.layers):
            attn_out, weights = _attention(
                _layer_norm(x, layer.ln1_gamma, layer.ln1_beta), layer, params.head_count
            )
            x = x + attn_out
            h = _layer_norm(x, layer.ln2_gamma, layer.ln2_beta)
            h = _gelu(h @ layer.w_ff1.T + layer.b_ff1) @ layer.w_ff2.T + layer.b_ff2
            x = x + h
            if not np.all(np.isfinite(x)):
                raise FloatingPointError(f"non-finite activations in encoder layer {li}")
            attn_seq.append(weights)
        out[s] = x
        attn_all.append(attn_seq)
    if return_attention:
        return out, attn_all
    return out


def refine_descriptors(
    descriptors: Sequence[GlobalDescriptor],
    params: EncoderParams,
    layout: Optional[SegmentLayout] = None,
) -> list[GlobalDescriptor]:
    """Full pass: segment, encode across the batch, restore per-image vectors."""
    if layout is None:
        layout = SegmentLayout.for_descriptor(len(descriptors[0]), params.model_dim)
    seqs = segment_and_rearrange(descriptors, layout)
    refined = encoder_forward(seqs, params)
    mat = restore_layout(refined, layout)
    return [
        GlobalDescriptor(mat[i], image_id=d.image_id)
        for i, d in enumerate(descriptors)
    ]
