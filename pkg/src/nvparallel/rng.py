"""Named random sub-streams derived from a single master seed.

Every consumer asks for a stream by name (and optionally an integer counter
such as a shot-block index), so adding a new consumer never shifts the draws
seen by an existing one.
"""
import zlib

import numpy as np


def _key(name):
    if isinstance(name, (int, np.integer)):
        return int(name)
    return zlib.crc32(str(name).encode("utf-8"))


def substream(seed, *names):
    """Return a Generator for the stream ``names`` under master ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(n) for n in names))
    return np.random.Generator(np.random.PCG64(ss))
