"""
Counter-based random streams and deterministic chunked parallelism.

Every chunk of ``CHUNK`` draws gets its own Philox generator keyed by
``(master_seed, namespace, chunk_index)``, so output depends only on the
seed and never on how chunks are scheduled across threads.
"""

from __future__ import annotations

import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

CHUNK = 65536
MASK64 = (1 << 64) - 1


def namespace_id(name: str) -> int:
    """Stable 32-bit tag separating streams used for different purposes."""
    return zlib.crc32(name.encode())


@dataclass(frozen=True)
class RngStream:
    """A (master_seed, stream_id) pair; ``generator()`` always restarts at draw 0."""

    master_seed: int
    stream_id: int

    def __post_init__(self):
        if not (0 <= self.master_seed <= MASK64 and 0 <= self.stream_id <= MASK64):
            raise ValueError("seed and stream id must be unsigned 64-bit integers")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence([self.master_seed, self.stream_id])
        return np.random.Generator(np.random.Philox(ss))


def chunk_stream(master_seed: int, namespace: str, chunk_index: int) -> RngStream:
    return RngStream(master_seed & MASK64, (namespace_id(namespace) << 32) | chunk_index)


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get("PGN_THREADS", "1") or 1)
    return max(1, int(threads))


def run_chunked(fn, n: int, master_seed: int, namespace: str, threads: int | None = None,
                width: int = 1) -> np.ndarray:
    """
    Fill an ``(n, width)`` (or ``(n,)`` when width is 1) array by calling
    ``fn(generator, k)`` for consecutive chunks of at most ``CHUNK`` draws.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    shape = (n,) if width == 1 else (n, width)
    out = np.empty(shape)
    starts = list(range(0, n, CHUNK))

    def work(i):
        lo = starts[i]
        k = min(CHUNK, n - lo)
        gen = chunk_stream(master_seed, namespace, i).generator()
        out[lo:lo + k] = fn(gen, k)

    threads = resolve_threads(threads)
    if threads == 1 or len(starts) <= 1:
        for i in range(len(starts)):
            work(i)
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(work, range(len(starts))))
    return out
