"""NumPy implementation of the coin kernels.

This is the fallback path used when the compiled extension is unavailable.
Both implementations must agree bit-for-bit; tests/test_kernels.py enforces it.

The coin construction: a byte string is folded into a 64-bit state lane by
lane (8-byte little-endian words, zero-padded tail), the subject id is
absorbed as one extra lane, and a splitmix64-style finalizer produces the
coin value. A coin with probability p fires when the value is strictly below
floor(p * 2**64). One fold prefix per sampling key serves any number of
subjects, which is what makes per-round sampling over all n processes cheap.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
_OFFSET = 0x84222325CBF29CE4
_LANE_MULT = 0xFF51AFD7ED558CCD
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

IMPL = "numpy"


def mix64(z: int) -> int:
    """splitmix64 finalizer on a 64-bit integer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def fold_prefix(data: bytes) -> tuple[int, int]:
    """Fold `data` into a 64-bit state; returns (state, byte length)."""
    h = _OFFSET
    n = len(data)
    for off in range(0, n, 8):
        lane = data[off : off + 8]
        if len(lane) < 8:
            lane = lane + b"\x00" * (8 - len(lane))
        w = int.from_bytes(lane, "little")
        h = ((h ^ mix64(w)) * _LANE_MULT) & MASK64
    return h, n


def fold_digest(data: bytes) -> int:
    """Complete 64-bit digest of a byte string."""
    h, n = fold_prefix(data)
    return mix64(h ^ n)


def coin_one(prefix: int, prefix_len: int, subject: int, threshold: int) -> bool:
    """Coin for one subject under a folded prefix.

    Equals fold_digest(data + subject.to_bytes(8, 'little')) < threshold
    where (prefix, prefix_len) = fold_prefix(data).
    """
    if threshold <= 0:
        return False
    if threshold > MASK64:
        return True
    h = ((prefix ^ mix64(subject)) * _LANE_MULT) & MASK64
    return mix64(h ^ (prefix_len + 8)) < threshold


# arange buffers reused across calls; masks are tiny and allocation dominates
_ARANGE_CACHE: dict[int, np.ndarray] = {}


def _subjects(n: int) -> np.ndarray:
    arr = _ARANGE_CACHE.get(n)
    if arr is None:
        arr = np.arange(1, n + 1, dtype=np.uint64)
        _ARANGE_CACHE[n] = arr
    return arr


def _mix64_vec(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def coin_mask(prefix: int, prefix_len: int, n: int, threshold: int) -> np.ndarray:
    """Boolean coin array for subjects 1..n under a folded prefix."""
    if threshold <= 0:
        return np.zeros(n, dtype=bool)
    if threshold > MASK64:
        return np.ones(n, dtype=bool)
    z = _mix64_vec(_subjects(n))
    h = (np.uint64(prefix) ^ z) * np.uint64(_LANE_MULT)
    h = _mix64_vec(h ^ np.uint64(prefix_len + 8))
    return h < np.uint64(threshold)


def sample_pids(prefix: int, prefix_len: int, n: int, threshold: int) -> np.ndarray:
    """Process ids (1-based) whose coin fires, ascending."""
    if threshold <= 0:
        return np.empty(0, dtype=np.int64)
    if threshold > MASK64:
        return np.arange(1, n + 1, dtype=np.int64)
    mask = coin_mask(prefix, prefix_len, n, threshold)
    return (np.nonzero(mask)[0] + 1).astype(np.int64)
