"""Seeded random-number streams.

All randomness in the package flows through counter-based Philox generators
keyed by a 64-bit seed.  Independent subsystems (samplers, permutation tests,
MCMC chains, lattice boundaries) pull disjoint streams from the same seed so
that every run is bit-reproducible and parallel consumers never share state.
"""

import numpy as np

__all__ = ["rng_stream"]


def rng_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Return a Generator for `(seed, stream)`.

    Distinct `stream` indices under the same seed yield statistically
    independent, non-overlapping streams (Philox keyed via SeedSequence
    spawn keys).  The mapping is deterministic across platforms.
    """
    if not 0 <= int(seed) < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))
