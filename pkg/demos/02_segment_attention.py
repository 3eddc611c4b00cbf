"""Cross-image refinement with segment-wise self-attention.

Global descriptors inside a batch are sliced into fixed-length segments;
each segment position forms a sequence over the batch and is passed
through a small pre-norm transformer encoder. Because there is no
positional encoding, reordering the images in the batch just reorders
the outputs.
"""

import numpy as np

from placemine import (
    GlobalDescriptor,
    SegmentLayout,
    encoder_forward,
    random_encoder_params,
    refine_descriptors,
    restore_layout,
    segment_and_rearrange,
)

rng = np.random.default_rng(1)

# The production layout: 8448-d descriptors split into 11 segments of 768.
layout = SegmentLayout.for_descriptor(8448, 768)
print(f"8448-d descriptor -> {layout.segment_count} segments of {layout.segment_length}")

# A small layout keeps the demo fast.
layout = SegmentLayout(segment_count=4, segment_length=16)
params = random_encoder_params(model_dim=16, head_count=4, ff_dim=64, seed=5)

batch = rng.standard_normal((8, 64))  # 8 descriptors of 64 dims
sequences = segment_and_rearrange(batch, layout)
print("rearranged to (segments, batch, segment_len):", sequences.shape)

# Slicing and restoring is lossless.
print("round trip bitwise:", np.array_equal(restore_layout(sequences, layout), batch))

refined, attention = encoder_forward(sequences, params, return_attention=True)
rows = attention[0][0].sum(axis=-1)
print(f"attention rows sum to one: max |row sum - 1| = {np.abs(rows - 1).max():.2e}")

# Permutation equivariance: shuffle the batch, outputs shuffle with it.
perm = rng.permutation(8)
refined_perm = encoder_forward(sequences[:, perm, :], params)
gap = np.abs(refined[:, perm, :] - refined_perm).max()
print(f"batch-permutation equivariance: max deviation = {gap:.2e}")

# One-call convenience wrapper on named descriptors.
named = [GlobalDescriptor(row, image_id=f"img{i}") for i, row in enumerate(batch)]
out = refine_descriptors(named, params, layout)
print("refined:", len(out), "descriptors of", out[0].vector.size, "dims,"
      " ids preserved:", [d.image_id for d in out[:3]], "...")
