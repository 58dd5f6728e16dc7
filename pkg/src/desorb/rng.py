"""Counter-based random streams, bitwise reproducible under parallelism.

Each logical consumer derives its own Philox stream from the triple
(global seed, purpose tag, index), so work can be partitioned across
threads in any way without changing a single drawn number.
"""

from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Independent generator keyed by (seed, tag, index)."""
    ss = np.random.SeedSequence(
        entropy=int(seed) & 0xFFFFFFFFFFFFFFFF,
        spawn_key=(zlib.crc32(tag.encode("utf-8")), int(index)),
    )
    return np.random.Generator(np.random.Philox(ss))
