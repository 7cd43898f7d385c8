"""Counter-based seed derivation for reproducible replicate streams."""

from __future__ import annotations

import zlib

import numpy as np

STREAMS = {
    "default": 0,
    "rice1d": 1,
    "trig": 2,
    "kss": 3,
    "waves": 4,
    "localtime": 5,
}


def stream_id(name: str | int) -> int:
    if isinstance(name, (int, np.integer)):
        return int(name)
    return STREAMS.get(name, zlib.crc32(name.encode()) & 0xFFFFFFFF)


def derive_seed(base_seed: int, replicate: int, stream: str | int = "default") -> int:
    """64-bit seed for one replicate, independent of evaluation order."""
    ss = np.random.SeedSequence(int(base_seed) & (2**64 - 1), spawn_key=(stream_id(stream), int(replicate)))
    return int(ss.generate_state(1, np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    """Philox generator keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))


def replicate_rng(base_seed: int, replicate: int, stream: str | int = "default") -> tuple[int, np.random.Generator]:
    seed = derive_seed(base_seed, replicate, stream)
    return seed, make_rng(seed)
