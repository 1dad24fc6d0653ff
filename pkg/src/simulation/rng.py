"""Named random streams split from one experiment seed."""

import zlib

import numpy as np

STREAMS = ("arrivals", "placement", "trajectory", "init", "policy")


def stream_key(name):
    return zlib.crc32(name.encode("utf-8"))


def make_stream(seed, name):
    """
    Independent numpy Generator for one named stream

    The stream name is hashed into the spawn key, so adding a new stream
    never shifts the draws of existing ones.
    """
    if name not in STREAMS:
        raise ValueError(f"Unknown random stream: {name}")
    sequence = np.random.SeedSequence(int(seed), spawn_key=(stream_key(name),))
    return np.random.default_rng(sequence)


def make_streams(seed):
    return {name: make_stream(seed, name) for name in STREAMS}
