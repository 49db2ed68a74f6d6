"""Internal helpers: seed derivation and shuffled fold layout."""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> int:
    """One mixing step of splitmix64. Uniform and fast; used to derive seeds."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_seed(seed: int, *labels: int) -> int:
    """Derive a child seed from a master seed and integer labels.

    Pure function of its arguments: derived streams do not depend on call
    order or scheduling, which keeps parallel work reproducible.
    """
    out = splitmix64(seed & _MASK64)
    for label in labels:
        out = splitmix64(out ^ (label & _MASK64))
    return out


def fold_assignments(m: int, k: int, seed: int) -> np.ndarray:
    """Assign m rows to k seeded-shuffle folds whose sizes differ by at most 1.

    Returns an int array of length m with values in [0, k). Fold f holds the
    f-th contiguous block of the shuffled row order; the first m % k folds
    get the extra row.
    """
    if not 2 <= k <= m:
        raise ValueError(f"need 2 <= k <= m, got k={k}, m={m}")
    perm = np.random.default_rng(seed).permutation(m)
    sizes = np.full(k, m // k, dtype=np.int64)
    sizes[: m % k] += 1
    out = np.empty(m, dtype=np.int64)
    start = 0
    for fold, size in enumerate(sizes):
        out[perm[start : start + size]] = fold
        start += size
    return out
