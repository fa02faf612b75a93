"""Splittable child-seed derivation.

SplitMix64 mixing of (master, realization index, L_E, time-grid id) with
the usual fixed constants, so sweep grids can be extended without
reshuffling seeds already assigned to existing cells.  The constant set is
part of the on-disk contract: changing it invalidates recorded runs.
"""
from __future__ import annotations

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def child_seed(master: int, *fields: int) -> int:
    """Deterministic 64-bit child seed from a master seed and integer fields."""
    s = master & _MASK
    for f in fields:
        s = _mix((s + _GOLDEN + (int(f) & _MASK)) & _MASK)
    return s
