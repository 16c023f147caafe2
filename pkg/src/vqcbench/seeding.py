"""Seeded counter-based random streams.

Each (seed, stream) pair gets an independent Philox generator, so the data
split, the parameter initialization and expressibility sampling never share
state and a run is reproducible from its seed alone.
"""
from __future__ import annotations

import numpy as np

STREAMS = {"split": 0, "init": 1, "expressibility": 2, "baseline": 3, "subsample": 4}


def make_rng(seed: int, stream: str | int = 0) -> np.random.Generator:
    key = STREAMS[stream] if isinstance(stream, str) else int(stream)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), key])))
