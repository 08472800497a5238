"""Deterministic seed derivation for nested, schedule-independent tasks.

Every randomized task in the package (a fold plan, a single learner
training, one replication of an experiment) receives its own integer seed
derived from a parent seed plus a path of labels.  Streams therefore do
not depend on execution order, which is what makes parallel runs
bit-identical to sequential ones.
"""

from __future__ import annotations

import numpy as np

# Fixed label -> integer namespace so string path components hash stably
# across processes and platforms (hash() is salted, so it is unusable here).
_LABELS = {
    "folds": 101,
    "learner": 102,
    "full": 103,
    "inner": 104,
    "rep": 105,
    "train": 106,
    "test": 107,
    "oracle": 108,
    "tree": 109,
    "cv": 110,
    "stage1": 111,
    "stage2": 112,
    "truth": 113,
}


def _encode(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError(f"seed path components must be nonnegative, got {part}")
        return int(part)
    try:
        return _LABELS[part]
    except KeyError:
        raise ValueError(f"unknown seed label {part!r}") from None


def derive_seed(seed: int, *path) -> int:
    """Map (seed, *path) to a stable 63-bit integer seed."""
    entropy = [_encode(seed)] + [_encode(p) for p in path]
    ss = np.random.SeedSequence(entropy)
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


def rng_for(seed: int, *path) -> np.random.Generator:
    """A fresh Generator seeded from the derived stream for this path."""
    return np.random.default_rng(derive_seed(seed, *path))
