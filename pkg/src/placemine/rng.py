"""Named, counter-based random substreams.

Every stochastic choice in the pipeline draws from a stream keyed by
(master_seed, *tags).  Streams are independent of each other and of the
order in which they are created, so adding parallelism or reordering
stages never changes results.
"""

from __future__ import annotations

import hashlib

import numpy as np


def substream(master_seed: int, *tags) -> np.random.Generator:
    """Return a generator keyed by the master seed and a tag path.

    Tags are stringified, so mixed ints/strings are fine:
    ``substream(seed, "graph", epoch, draw_idx)``.
    """
    material = repr((int(master_seed),) + tuple(str(t) for t in tags))
    digest = hashlib.sha256(material.encode("utf-8")).digest()[:16]
    key = int.from_bytes(digest, "little")
    return np.random.Generator(np.random.Philox(key=key))
