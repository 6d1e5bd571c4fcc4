"""Named, counter-based random substreams.

Every random draw in the package goes through :func:`substream`, which keys a
Philox4x64-10 generator (a counter-based PRNG) with a BLAKE2b digest of the
master seed and a stream name.  Philox output depends only on (key, counter),
so the same ``(seed, name)`` produces the same stream on every platform and
numpy version that ships the Philox bit generator.
"""

from __future__ import annotations

import hashlib

import numpy as np

# canonical substream names
DATA = "data"
PERTURBATIONS = "perturbations"
THRESHOLDS = "thresholds"
DIRECTIONS = "directions"
NOISE = "noise"

_MASK64 = (1 << 64) - 1


def _key(seed: int, name: str) -> np.ndarray:
    digest = hashlib.blake2b(
        f"{int(seed) & _MASK64}:{name}".encode(), digest_size=16
    ).digest()
    return np.frombuffer(digest, dtype="<u8").astype(np.uint64)


def substream(seed: int, *names: str | int) -> np.random.Generator:
    """Return an independent generator for ``seed`` and a path of names.

    >>> a = substream(7, "data", 0).standard_normal(3)
    >>> b = substream(7, "data", 0).standard_normal(3)
    >>> bool((a == b).all())
    True
    """
    name = "/".join(str(n) for n in names)
    return np.random.Generator(np.random.Philox(key=_key(seed, name)))


def derive_seed(seed: int, *names: str | int) -> int:
    """Derive a child 64-bit seed, e.g. for a stage that records its own seed."""
    name = "/".join(str(n) for n in names)
    digest = hashlib.blake2b(
        f"{int(seed) & _MASK64}:{name}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")
