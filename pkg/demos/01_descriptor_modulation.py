"""Residual patch modulation and bilinear aggregation.

Walks through the local-descriptor half of the library: take a set of
patch descriptors for one image, re-weight salient patches with the
norm-driven gate, check the cheap variance-shift estimate against the
exact value, and collapse everything into a single global vector.
"""

import numpy as np

from placemine import (
    PatchDescriptorSet,
    cfp_aggregate,
    default_aggregation_params,
    default_softp_params,
    l2_normalize,
    softp_modulate,
    variance_shift_estimate,
)

rng = np.random.default_rng(0)

# One image worth of patch descriptors: 64 patches, 32-d each.
patches = PatchDescriptorSet(rng.standard_normal((64, 32)))

# The gate maps each patch norm through a tiny MLP and a sigmoid, so the
# per-patch boost is bounded by alpha.
params = default_softp_params(seed=7, alpha=0.8)
modulated, beta = softp_modulate(patches, params)
print(f"boost range: [{beta.min():.3f}, {beta.max():.3f}]  (alpha = {params.alpha})")

# alpha = 0 switches the gate off entirely — output is bitwise identical.
identity, _ = softp_modulate(patches, default_softp_params(seed=7, alpha=0.0))
print("alpha=0 is the identity:", np.array_equal(identity.descriptors, patches.descriptors))

# The linearised estimate of how much the patch variance moved is cheap
# to compute and accurate to second order for small boosts.
small_beta = 0.05 * beta
exact, estimate = variance_shift_estimate(patches, small_beta)
print(f"variance shift  exact={exact:.6f}  estimate={estimate:.6f}  gap={abs(exact-estimate):.2e}")

# Bilinear aggregation: compress (32 -> 128) x probe (32 -> 64), averaged
# over patches and flattened, optionally concatenated with a projected
# class token, then L2-normalized.
agg = default_aggregation_params(32, compress_dim=128, probe_dim=64, token_dim=256, seed=3)
token = rng.standard_normal(32)
descriptor = l2_normalize(cfp_aggregate(modulated, token, agg))
print(f"global descriptor: dim={descriptor.vector.size} (128*64 + 256), "
      f"norm={np.linalg.norm(descriptor.vector):.6f}")
