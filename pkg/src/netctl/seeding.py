"""Named random substreams derived from one master seed.

Every random draw in an experiment comes from a substream identified by a
short name, so adding a new consumer never shifts the numbers seen by the
existing ones.
"""
import zlib

import numpy as np

#: Substream names used by the experiment pipelines.
STREAMS = ("graph", "params", "desired-state", "init-state", "noise",
           "baseline-sampling", "gradcheck")


def seed_sequence(master, name, *extra):
    """Return the :class:`numpy.random.SeedSequence` for substream ``name``."""
    key = (zlib.crc32(name.encode("ascii")),) + tuple(int(e) for e in extra)
    return np.random.SeedSequence(int(master), spawn_key=key)


def substream(master, name, *extra):
    """Return a fresh generator for substream ``name`` of ``master``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(master, name, *extra)))


def as_generator(seed, *extra):
    """Coerce an int or SeedSequence (plus optional child index) to a generator."""
    if isinstance(seed, np.random.SeedSequence):
        ss = np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key + tuple(extra))
    else:
        ss = np.random.SeedSequence(int(seed), spawn_key=tuple(extra))
    return np.random.Generator(np.random.PCG64(ss))
