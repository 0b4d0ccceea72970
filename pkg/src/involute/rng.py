"""Named counter-based random streams.

Every consumer of randomness in the package pulls from a Philox stream keyed
by ``(seed, *tags)``.  Distinct key tuples give statistically independent
streams regardless of draw order, so chains, proposal clouds, and synthetic
data generators never share randomness, and results are reproducible across
platforms.
"""

from __future__ import annotations

import hashlib

import numpy as np


def rng_stream(seed: int, *tags) -> np.random.Generator:
    """Return a Generator on the Philox stream named by ``(seed, *tags)``.

    Tags may be ints or strings (e.g. a chain index and a purpose label such
    as ``"sample"`` or ``"warmup"``).  The 128-bit Philox key is derived by
    hashing the full tuple, so any change to seed or tags selects an
    unrelated stream.
    """
    material = repr((int(seed),) + tuple(tags)).encode()
    digest = hashlib.sha256(material).digest()[:16]
    key = np.frombuffer(digest, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
