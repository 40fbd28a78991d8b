"""Counter-based random substreams.

Every stochastic component in this package draws from a substream addressed
by a root seed plus an integer path, e.g. ``substream(seed, iteration, role)``.
Substreams derived from distinct paths are statistically independent, and the
same (seed, path) always reproduces the same stream, so batches may be
evaluated in any order or in parallel without changing results.
"""

from __future__ import annotations

from typing import Union

import numpy as np

RootSeed = Union[int, np.random.SeedSequence]


def subseed(root: RootSeed, *path: int) -> np.random.SeedSequence:
    """Derive the seed sequence for ``path`` under ``root``."""
    if isinstance(root, np.random.SeedSequence):
        key = tuple(root.spawn_key) + tuple(path)
        return np.random.SeedSequence(entropy=root.entropy, spawn_key=key)
    return np.random.SeedSequence(entropy=int(root), spawn_key=tuple(path))


def substream(root: RootSeed, *path: int) -> np.random.Generator:
    """Generator for the substream addressed by ``path`` under ``root``."""
    return np.random.default_rng(subseed(root, *path))


def stream_id(root: RootSeed, *path: int) -> str:
    """Stable textual identifier of a substream, recorded in run traces."""
    ss = subseed(root, *path)
    key = ",".join(str(k) for k in ss.spawn_key)
    return f"{ss.entropy}:{key}"
