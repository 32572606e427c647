"""Counter-based random streams.

Every consumer of randomness in the package addresses an explicit substream
of a single Philox generator: a 128-bit key derived from the master seed and
a 256-bit counter whose high words encode (loop index, repetition, particle,
context). Identical inputs give bitwise identical draws on every platform
and for every degree of parallelism; distinct substreams are independent by
construction of the underlying block cipher.

Counter word layout (little-endian words, word 0 is the in-stream position
that Philox increments while drawing):

    word 0: 0 (advances during generation)
    word 1: loop index
    word 2: repetition << 16 | particle
    word 3: context hash (time slice, sweep value, purpose tag)
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

__all__ = ["philox_key", "context_hash", "substream", "SeededStream"]

_MAX16 = 1 << 16
_MAX48 = 1 << 48
_MAX64 = 1 << 64


def philox_key(master_seed: int) -> np.ndarray:
    """Expand a master seed into the 2-word Philox key."""
    if not 0 <= int(master_seed) < _MAX64:
        raise ValueError("master seed must fit in uint64")
    ss = np.random.SeedSequence(int(master_seed))
    return ss.generate_state(2, dtype=np.uint64)


def context_hash(*parts) -> int:
    """Collapse a tuple of tags (str, int, float) into a uint64.

    Floats are hashed by their IEEE-754 bits after float() normalisation, so
    2 and 2.0 collide deliberately while 2.0 and 2.0000001 do not.
    """
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        if isinstance(p, str):
            h.update(b"s")
            h.update(p.encode())
        elif isinstance(p, bool):
            raise TypeError("ambiguous context part of type bool")
        elif isinstance(p, (int, np.integer)):
            h.update(b"i")
            h.update(struct.pack("<q", int(p)))
        elif isinstance(p, (float, np.floating)):
            h.update(b"f")
            h.update(struct.pack("<d", float(p)))
        else:
            raise TypeError(f"unhashable context part of type {type(p)!r}")
        h.update(b"\x00")
    return int.from_bytes(h.digest(), "little")


def substream(
    key: np.ndarray,
    loop_index: int,
    particle: int = 0,
    repetition: int = 0,
    context: int = 0,
) -> np.random.Generator:
    """Generator for one addressed substream."""
    if not 0 <= particle < _MAX16:
        raise ValueError("particle index out of range")
    if not 0 <= repetition < _MAX48:
        raise ValueError("repetition index out of range")
    counter = np.array(
        [
            0,
            int(loop_index),
            (int(repetition) << 16) | int(particle),
            int(context) % _MAX64,
        ],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


class SeededStream:
    """Convenience wrapper binding a key and a fixed context."""

    def __init__(self, master_seed: int, context: int = 0):
        self.key = philox_key(master_seed)
        self.context = int(context)

    def generator(self, loop_index: int, particle: int = 0, repetition: int = 0):
        return substream(
            self.key, loop_index, particle, repetition, context=self.context
        )
