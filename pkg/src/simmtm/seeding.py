"""Deterministic seed derivation; every random draw in simmtm flows from here."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STREAMS = ("model", "head", "mask", "shuffle", "subset")


def derive_seed(seed: int, *keys: int) -> int:
    """A 63-bit seed that is a pure function of (seed, keys)."""
    state = np.random.SeedSequence([seed, *keys]).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


@dataclass(frozen=True)
class SeedStreams:
    """Independent seeds per concern, so e.g. head init ignores encoder init."""

    model: int
    head: int
    mask: int
    shuffle: int
    subset: int

    def rng(self, stream: str) -> np.random.Generator:
        return np.random.default_rng(getattr(self, stream))


def seed_streams(seed: int) -> SeedStreams:
    return SeedStreams(**{name: derive_seed(seed, index) for index, name in enumerate(STREAMS)})
