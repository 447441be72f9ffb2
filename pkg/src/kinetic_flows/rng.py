"""Counter-based random numbers for reproducible, thread-count independent sampling.

Every random draw in the particle stepper is a pure function of
``(seed, stream label, event ordinal, block)``.  The generator is the
Philox4x32-10 bijection, evaluated on whole numpy arrays of counters at once.
"""
from __future__ import annotations

import numpy as np

_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85

_TWO_M32 = 2.0**-32
_TWO_M53 = 2.0**-53


def philox4x32(counter, key, rounds: int = 10):
    """Apply Philox4x32 to a batch of 128-bit counters.

    ``counter`` is a sequence of four integer arrays (or scalars) holding the
    32-bit counter words; ``key`` is a pair of 32-bit ints.  Returns four
    ``uint64`` arrays, each holding one 32-bit output word.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _MASK32 for c in counter)
    c0, c1, c2, c3 = np.broadcast_arrays(c0, c1, c2, c3)
    k0 = int(key[0]) & 0xFFFFFFFF
    k1 = int(key[1]) & 0xFFFFFFFF
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & 0xFFFFFFFF
            k1 = (k1 + _W1) & 0xFFFFFFFF
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _SHIFT32) ^ c1 ^ np.uint64(k0),
            p1 & _MASK32,
            (p0 >> _SHIFT32) ^ c3 ^ np.uint64(k1),
            p0 & _MASK32,
        )
    return c0, c1, c2, c3


def seed_key(seed: int) -> tuple[int, int]:
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed & 0xFFFFFFFF, seed >> 32


def uniform32(word) -> np.ndarray:
    """Map one 32-bit word to the open interval (0, 1)."""
    return (word.astype(np.float64) + 0.5) * _TWO_M32


def uniform53(hi, lo) -> np.ndarray:
    """Map two 32-bit words to a 53-bit uniform on the open interval (0, 1)."""
    k = (hi >> np.uint64(5)) * np.uint64(1 << 26) + (lo >> np.uint64(6))
    return (k.astype(np.float64) + 0.5) * _TWO_M53


def scaled_index(word, n: int) -> np.ndarray:
    """Uniform index in ``[0, n)`` from one 32-bit word (multiply-shift)."""
    return ((word * np.uint64(n)) >> _SHIFT32).astype(np.int64)


def derive_seed(seed: int, *tags) -> int:
    """Derive an independent 64-bit seed from ``seed`` and integer/str tags."""
    words = [int(seed) & 0xFFFFFFFF, int(seed) >> 32]
    for tag in tags:
        if isinstance(tag, str):
            words.extend(tag.encode())
        else:
            words.append(int(tag))
    state = np.random.SeedSequence(words).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def generator(seed: int, *tags) -> np.random.Generator:
    """A numpy Generator for bulk, single-threaded sampling (initial data etc.)."""
    return np.random.Generator(np.random.Philox(derive_seed(seed, *tags)))
