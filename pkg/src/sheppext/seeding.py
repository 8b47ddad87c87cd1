"""Counter-based seed fan-out.

Replication ``k`` of a run seeded with ``seed`` draws from
``numpy.random.Generator(PCG64(sub_seed(seed, k)))``.  The mapping is a
splitmix64 finalizer applied twice, so neighbouring counters give
uncorrelated streams and the result does not depend on how replications are
scheduled across workers.
"""

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x):
    x = (x + _GOLDEN) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def sub_seed(seed, k):
    """64-bit seed for stream ``k`` under master ``seed``."""
    return splitmix64((splitmix64(int(seed) & _MASK) + int(k)) & _MASK)


def rng_for(seed, k):
    return np.random.Generator(np.random.PCG64(sub_seed(seed, k)))


def path_rng(seed):
    """Generator for a single-path call that is given ``seed`` directly."""
    return np.random.Generator(np.random.PCG64(int(seed) & _MASK))
