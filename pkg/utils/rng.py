"""Named random streams.

Every concern (centerline, trees, speckle, noise, jitter, batches, ...) draws from its own
counter-based Philox generator keyed on ``(seed, tag, *extra)``, so adding draws to one
concern never shifts another.
"""

import zlib

import numpy as np


def _tag_key(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def stream(seed: int, tag: str, *extra: int) -> np.random.Generator:
    """Return the generator for ``tag`` under ``seed``; ``extra`` indexes sub-streams."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, _tag_key(tag), *(int(e) & 0xFFFFFFFF for e in extra)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(seed: int, tag: str, *extra: int) -> int:
    """A 63-bit child seed, for handing to code that wants a plain integer."""
    return int(stream(seed, tag, *extra).integers(0, 2**63 - 1))
