"""Seedable 64-bit PRNG used for reproducible mask sampling.

The generator is SplitMix64: state walks the 64-bit golden-ratio constant
and every output is a finalizing mix of the advanced state,

    z   = seed + k * 0x9E3779B97F4A7C15          (k-th draw, k >= 1, mod 2**64)
    z   = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9    (mod 2**64)
    z   = (z ^ (z >> 27)) * 0x94D049BB133111EB    (mod 2**64)
    out =  z ^ (z >> 31)

Because the k-th output depends only on (seed, k), draws can be produced in
bulk with no generator object and no ordering hazards; the stream for a seed
is fixed by these constants forever, independent of numpy version.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX_1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX_2 = np.uint64(0x94D049BB133111EB)


def splitmix64(seed: int, count: int) -> np.ndarray:
    """Return the first `count` SplitMix64 outputs for `seed` as a uint64 array.

    `seed` is reduced mod 2**64, so any Python integer (including negative
    ones) is accepted.
    """
    if count < 0:
        raise ContractError(f"count must be >= 0, got {count}")
    start = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    k = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = start + k * _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX_1
        z = (z ^ (z >> np.uint64(27))) * _MIX_2
    return z ^ (z >> np.uint64(31))


def bernoulli_bits(seed: int, n_rows: int, n_cols: int) -> np.ndarray:
    """Fair coin flips as a uint8 (n_rows, n_cols) matrix.

    One SplitMix64 word is drawn per bit in row-major order and its top bit
    is taken, so bit (i, j) is fixed by (seed, i * n_cols + j) alone.
    """
    if n_rows < 0 or n_cols < 0:
        raise ContractError("matrix dimensions must be non-negative")
    words = splitmix64(seed, n_rows * n_cols)
    return (words >> np.uint64(63)).astype(np.uint8).reshape(n_rows, n_cols)
