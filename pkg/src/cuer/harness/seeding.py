"""Named random streams derived from one master seed.

A stream's seed is the first 8 bytes (little endian) of
``blake2b(f"{master}:{name}:{counter}")``. Each consumer hashes its own
name, so adding a new consumer never shifts the draws of existing ones.
"""

from __future__ import annotations

import hashlib

import numpy as np

STREAMS = ("env", "init", "explore", "strategy", "smoothing", "eval")


def stream_seed(master: int, name: str, counter: int = 0) -> int:
    digest = hashlib.blake2b(f"{int(master)}:{name}:{int(counter)}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream(master: int, name: str, counter: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(stream_seed(master, name, counter)))


def streams(master: int) -> dict[str, np.random.Generator]:
    return {name: stream(master, name) for name in STREAMS}
