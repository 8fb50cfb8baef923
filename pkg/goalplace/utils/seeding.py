"""Seed splitting: every random stream derives from one master seed."""

import zlib

import numpy as np


def _key(part: int | str) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


def derive_seed(master: int, *keys: int | str) -> np.random.SeedSequence:
    """SeedSequence for the component named by ``keys`` under ``master``.

    String keys are mapped through CRC-32 so the split is stable across
    interpreter runs.
    """
    return np.random.SeedSequence([int(master), *(_key(k) for k in keys)])


def rng_for(master: int, *keys: int | str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *keys))


def child_seeds(master: int, count: int, *keys: int | str) -> list[int]:
    """Integer seeds for ``count`` independent runs."""
    seq = derive_seed(master, *keys)
    return [int(s.generate_state(1)[0]) for s in seq.spawn(count)]
