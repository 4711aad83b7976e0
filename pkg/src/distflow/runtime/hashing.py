"""Counter-based keyed randomness.

Every random quantity is a pure function of (seed, label, counters...), so
results do not depend on which worker, backend or schedule produced them.
Python's hash() is salted per process, so keys come from blake2b and the
streams from numpy's Philox counter-based generator.
"""

import hashlib
import struct
from typing import List, Union

import numpy as np

Part = Union[int, str, bytes]

_MASK64 = (1 << 64) - 1


def _encode_part(part: Part) -> bytes:
    if isinstance(part, bool):
        part = int(part)
    if isinstance(part, int):
        return b"i" + struct.pack("<Q", part & _MASK64)
    if isinstance(part, str):
        data = part.encode("utf-8")
        return b"s" + struct.pack("<I", len(data)) + data
    return b"b" + struct.pack("<I", len(part)) + bytes(part)


def derive_key(seed: int, *parts: Part) -> int:
    """128-bit key mixing the run seed with any number of parts."""
    digest = hashlib.blake2b(digest_size=16)
    digest.update(_encode_part(seed))
    for part in parts:
        digest.update(_encode_part(part))
    return int.from_bytes(digest.digest(), "little")


def keyed_generator(seed: int, *parts: Part) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=derive_key(seed, *parts)))


def keyed_uniform(seed: int, *parts: Part) -> float:
    """Uniform float in [0, 1) with 53 bits of precision."""
    return (derive_key(seed, *parts) >> 75) * (1.0 / (1 << 53))


def keyed_range(seed: int, low: float, high: float, *parts: Part) -> float:
    return low + (high - low) * keyed_uniform(seed, *parts)


def keyed_int(seed: int, low: int, high: int, *parts: Part) -> int:
    """Integer in [low, high] inclusive."""
    if high < low:
        raise ValueError(f"Empty integer range [{low}, {high}]")
    return low + derive_key(seed, *parts) % (high - low + 1)


def keyed_bytes(seed: int, nbytes: int, *parts: Part) -> bytes:
    """Keyed pseudo-random byte stream of the requested length."""
    if nbytes <= 0:
        return b""
    return keyed_generator(seed, *parts).bytes(nbytes)


def keyed_permutation(seed: int, n: int, *parts: Part) -> List[int]:
    return [int(index) for index in keyed_generator(seed, *parts).permutation(n)]
