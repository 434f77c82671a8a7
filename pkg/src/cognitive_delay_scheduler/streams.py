"""Counter-based random sub-streams.

Every (seed, user, purpose) triple gets its own Philox generator keyed by a
``SeedSequence``. Changing one user's parameters therefore never shifts the
sample paths of another user, and the channel draws do not depend on how
many arrival draws happened before them.
"""

from enum import IntEnum
from typing import Dict, Tuple

import numpy as np

from .exceptions import ParameterError

__all__ = ["Purpose", "StreamFactory", "make_stream", "replicate_seed"]


class Purpose(IntEnum):
    ARRIVALS = 0
    CHANNEL = 1
    CSI = 2
    SERVICE = 3
    SERVICE_RATE = 4
    SERVICE_RATE_CSI = 5


def make_stream(seed: int, user: int, purpose: Purpose) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, user, int(purpose)])))


def replicate_seed(base_seed: int, replicate: int) -> int:
    """Seed for replicate ``replicate`` of a sweep, shared by every point of the grid."""
    if replicate == 0:
        return base_seed
    return int(np.random.SeedSequence([base_seed, replicate]).generate_state(1, np.uint64)[0])


class StreamFactory:
    """Hands out (and remembers) the generators of one run."""

    def __init__(self, seed: int):
        if seed < 0:
            raise ParameterError("seed must be non-negative")
        self.seed = seed
        self._streams: Dict[Tuple[int, Purpose], np.random.Generator] = {}

    def get(self, user: int, purpose: Purpose) -> np.random.Generator:
        key = (user, purpose)
        if key not in self._streams:
            self._streams[key] = make_stream(self.seed, user, purpose)
        return self._streams[key]
