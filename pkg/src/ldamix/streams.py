"""Deterministic random streams keyed by experiment coordinates."""

import zlib

import numpy as np


def _key(coord):
    if isinstance(coord, (int, np.integer)) and coord >= 0:
        return int(coord)
    return zlib.crc32(str(coord).encode())


def stream_seed(root_seed, *coords):
    """``SeedSequence`` for a root seed and a tuple of coordinates (ints or strings)."""
    return np.random.SeedSequence(int(root_seed), spawn_key=tuple(_key(c) for c in coords))


def make_rng(root_seed, *coords):
    return np.random.Generator(np.random.PCG64(stream_seed(root_seed, *coords)))


def stream_id(root_seed, *coords):
    """A 32-bit integer identifying the stream, for logging."""
    return int(stream_seed(root_seed, *coords).generate_state(1)[0])
