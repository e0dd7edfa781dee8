"""Deterministic random streams.

All randomness flows through numpy's counter-based Philox generator, keyed
by SeedSequence. Independent child streams are derived with spawn keys, one
per sampled object, so any object is reproducible in isolation:

    grammar seed s      -> partition stream (s, key=(0,)), logit stream (s, key=(1,))
    dataset seed s      -> sample i tree stream (s, key=(i, 0)),
                           sample i mask stream (s, key=(i, 1))

Determinism holds within one installed environment; the serialized files,
not the streams, are the portable interchange.
"""

from __future__ import annotations

import numpy as np

PARTITION_STREAM = 0
LOGIT_STREAM = 1

TREE_ROLE = 0
MASK_ROLE = 1


def child_seq(seed: int, *key: int) -> np.random.SeedSequence:
    """Independent child stream of `seed` at spawn position `key`."""
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(x) for x in key))


def generator(seed_or_seq) -> np.random.Generator:
    """Philox generator from an integer seed or a SeedSequence."""
    if isinstance(seed_or_seq, np.random.Generator):
        return seed_or_seq
    if not isinstance(seed_or_seq, np.random.SeedSequence):
        seed_or_seq = np.random.SeedSequence(int(seed_or_seq))
    return np.random.Generator(np.random.Philox(seed_or_seq))


def sample_stream(master_seed: int, index: int, role: int) -> np.random.SeedSequence:
    """Stream for one dataset record: role 0 draws the tree, role 1 the mask."""
    return child_seq(master_seed, index, role)
