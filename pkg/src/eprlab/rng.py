"""Counter-based random streams.

Streams are numpy Philox generators keyed directly by (seed, stream_id).
Philox is counter-based, so distinct keys give statistically independent
streams and a fixed key reproduces the identical sequence on any platform.
Values drawn from a stream depend only on the order and count of draws,
never on how draws are batched into calls.
"""

from __future__ import annotations

import numpy as np

# Recorded in manifests and sample metadata so outputs pin the generator.
RNG_ALGORITHM = "numpy.random.Philox(philox4x64), key=[seed, stream_id]"

_U64_MAX = 2**64 - 1


class RngStream:
    """One reproducible stream of standard normals keyed by (seed, stream_id)."""

    __slots__ = ("seed", "stream_id", "_gen")

    def __init__(self, seed: int, stream_id: int):
        seed = int(seed)
        stream_id = int(stream_id)
        if not 0 <= seed <= _U64_MAX:
            raise ValueError(f"seed must fit in uint64, got {seed}")
        if not 0 <= stream_id <= _U64_MAX:
            raise ValueError(f"stream_id must fit in uint64, got {stream_id}")
        self.seed = seed
        self.stream_id = stream_id
        key = np.array([seed, stream_id], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def standard_normal(self, size=None, out=None):
        if out is not None:
            return self._gen.standard_normal(out=out)
        if size is None:
            return float(self._gen.standard_normal())
        return self._gen.standard_normal(size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def rng_stream(seed: int, stream_id: int) -> RngStream:
    """Construct the (seed, stream_id) stream."""
    return RngStream(seed, stream_id)
