"""Counter-based RNG substreams keyed by (master seed, stream index)."""

import numpy as np


def substream(seed: int, index: int) -> np.random.Generator:
    """Independent Philox stream for a given (seed, index) pair.

    Streams are order-independent: any worker may draw stream ``index``
    and obtain identical values, which makes parallel reductions
    reproducible.
    """
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
