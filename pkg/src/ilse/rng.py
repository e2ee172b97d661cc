"""Named, seedable random streams.

All randomness in the library flows from one root seed. Components pull
independent generators by name (``stream(seed, "init")``, ``stream(seed,
"dropout", epoch)``) so that adding a consumer never perturbs the draws seen
by existing ones. Stream identity is derived by hashing the name parts, which
keeps the mapping stable across runs and platforms.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key(parts: tuple) -> list[int]:
    digest = hashlib.blake2s(repr(parts).encode("utf-8", "surrogatepass")).digest()
    # four u32 words of entropy per name, mixed with the root seed below
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def stream(seed: int, *names: object) -> np.random.Generator:
    """Return the PCG64 generator for the stream ``names`` under ``seed``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *_key(names)])
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *names: object) -> int:
    """Collapse a named stream to a single integer seed (for sub-components)."""
    return int(stream(seed, *names).integers(0, 2**63 - 1))
