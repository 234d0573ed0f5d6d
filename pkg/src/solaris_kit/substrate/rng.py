"""Deterministic counter-based random streams.

Every draw comes from a Philox block cipher keyed by (seed, stream id) at an
explicit draw counter, so any point of any stream can be reconstructed from
three integers. This is what makes parallel episode workers and mid-training
resume bitwise reproducible: there is no hidden generator state to carry
around, only the counter.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _stream_id(stream) -> int:
    """Map a stream label to a 64-bit id. Strings and tuples hash stably
    across runs; ints pass through."""
    if isinstance(stream, (tuple, list)):
        stream = repr(tuple(stream))
    if isinstance(stream, str):
        digest = hashlib.blake2b(stream.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    return int(stream) & _MASK64


class Rng:
    """One random stream: (seed, stream_id) plus a draw counter.

    Identical (seed, stream_id, counter) triples produce bitwise-identical
    draws across runs and processes. `spawn` derives independent substreams;
    `at` rewinds or fast-forwards without generating.
    """

    def __init__(self, seed: int, stream=0, counter: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = _stream_id(stream)
        self.counter = int(counter)

    def spawn(self, stream) -> "Rng":
        """Derive an independent stream under the same seed."""
        mixed = (self.stream_id * 0x9E3779B97F4A7C15 + _stream_id(stream)) & _MASK64
        return Rng(self.seed, mixed)

    def at(self, counter: int) -> "Rng":
        return Rng(self.seed, self.stream_id, counter)

    def _next_gen(self) -> np.random.Generator:
        bitgen = np.random.Philox(
            key=np.array([self.seed, self.stream_id], dtype=np.uint64),
            counter=np.array([self.counter, 0, 0, 0], dtype=np.uint64),
        )
        self.counter += 1
        return np.random.Generator(bitgen)

    # Draws. All return float32 (the substrate's dtype) unless noted.

    def normal(self, shape=()) -> np.ndarray:
        return self._next_gen().standard_normal(shape).astype(np.float32)

    def uniform(self, shape=(), low: float = 0.0, high: float = 1.0) -> np.ndarray:
        u = self._next_gen().random(shape)
        return (low + (high - low) * u).astype(np.float32)

    def integers(self, low: int, high: int, shape=()) -> np.ndarray:
        """Uniform integers in [low, high)."""
        return self._next_gen().integers(low, high, size=shape)

    def choice(self, n: int, p=None) -> int:
        """One index in [0, n), optionally weighted."""
        return int(self._next_gen().choice(n, p=p))

    def shuffled(self, n: int) -> np.ndarray:
        return self._next_gen().permutation(n)
