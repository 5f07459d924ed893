"""Counter-based random streams.

Streams are keyed by (master seed, *path), where the path is any sequence
of ints/strings naming the consumer (trial index, module tag, ...).  The
key is hashed into a Philox counter-based generator, so every stream is
independent of every other one and of the order in which streams are
created.  Re-keying instead of sequential splitting keeps trials
reproducible in isolation: trial k draws the same numbers whether or not
trials 0..k-1 ever ran.
"""

from __future__ import annotations

import hashlib

import numpy as np

RandomStream = np.random.Generator


def stream(master_seed: int, *path: int | str) -> RandomStream:
    """Derive an independent generator for (master_seed, *path)."""
    h = hashlib.sha256()
    h.update(str(int(master_seed)).encode())
    for part in path:
        h.update(b"/")
        h.update(str(part).encode())
    key = np.frombuffer(h.digest()[:16], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
