"""Deterministic derivation of independent random streams.

Every source of randomness in the library is a Philox (counter-based)
generator seeded through a ``numpy.random.SeedSequence`` whose spawn key
encodes a *purpose path*: a sequence of string tags and integer indices
such as ``("data", replicate)``.  Streams derived from the same master
seed but different paths are statistically independent, and results are
reproducible regardless of execution order or thread count.
"""

from __future__ import annotations

import hashlib

import numpy as np

SeedLike = "int | np.random.SeedSequence"


def _path_words(path) -> tuple[int, ...]:
    """Encode a purpose path as uint32 words for a SeedSequence spawn key."""
    words: list[int] = []
    for item in path:
        if isinstance(item, str):
            digest = hashlib.sha256(item.encode("utf-8")).digest()
            for i in (0, 4):
                words.append(int.from_bytes(digest[i : i + 4], "little"))
        elif isinstance(item, (int, np.integer)):
            if item < 0:
                raise ValueError(f"path indices must be nonnegative, got {item}")
            words.append(int(item) & 0xFFFFFFFF)
            words.append(int(item) >> 32)
        else:
            raise TypeError(f"unsupported path element {item!r}")
    return tuple(words)


def derive(seed, *path) -> np.random.SeedSequence:
    """SeedSequence for ``seed`` refined by a purpose path.

    ``seed`` may be an integer master seed or an already-derived
    SeedSequence; in the latter case the path extends its spawn key.
    """
    key = _path_words(path)
    if isinstance(seed, np.random.SeedSequence):
        entropy = seed.entropy
        key = tuple(seed.spawn_key) + key
    else:
        entropy = int(seed)
    return np.random.SeedSequence(entropy, spawn_key=key)


def stream(seed, *path) -> np.random.Generator:
    """Philox generator on the stream identified by ``(seed, *path)``."""
    return np.random.Generator(np.random.Philox(derive(seed, *path)))
