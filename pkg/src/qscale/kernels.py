"""Coin kernel selection and shared helpers.

Imports the compiled extension when present, otherwise the NumPy fallback.
`IMPL` names the active implementation ("cython" or "numpy"). Everything
downstream (crypto, protocol, simnet) goes through this module, so the two
implementations are interchangeable by construction.
"""

from __future__ import annotations

try:
    from qscale import _kernels as _impl  # type: ignore[attr-defined]
except ImportError:
    from qscale import _kernels_py as _impl

IMPL: str = _impl.IMPL
MASK64: int = _impl.MASK64

mix64 = _impl.mix64
fold_prefix = _impl.fold_prefix
fold_digest = _impl.fold_digest
coin_one = _impl.coin_one
coin_mask = _impl.coin_mask
sample_pids = _impl.sample_pids

_TWO64 = 1 << 64


def coin_threshold(p: float) -> int:
    """floor(p * 2**64), clamped: the strict-less-than cutoff for coins."""
    if p <= 0.0:
        return 0
    if p >= 1.0:
        return _TWO64
    return int(p * _TWO64)
