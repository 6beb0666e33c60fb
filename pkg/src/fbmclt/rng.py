"""Deterministic random-stream derivation.

All randomness in the package flows through counter-based Philox generators
whose 128-bit keys are derived from a single 64-bit master seed, a short
ASCII label naming the purpose of the stream, and zero or more integer
indices (replication number, batch number, ...). The derivation is a
splitmix64-style hash chain, so

  * the same (seed, label, indices) always yields the same stream, on any
    platform and for any thread count;
  * distinct labels or indices yield statistically independent streams
    (keys differ in a full 128-bit avalanche).

Normal variates are drawn with ``Generator.standard_normal`` (numpy's
ziggurat). The choice is documented here and in the README: it is
deterministic for a fixed stream, which is the binding requirement.
"""

import numpy as np

from .errors import DomainError

_M64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def _mix64(z):
    # splitmix64 finalizer
    z &= _M64
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _M64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _M64
    z ^= z >> 31
    return z


def derive_key(seed, label, *indices):
    """128-bit Philox key from (seed, label, *indices).

    The label is absorbed byte by byte, each index as one 64-bit word,
    each absorption separated by the splitmix64 increment so that
    ("ab",) and ("a", "b"-ish index collisions) cannot alias.
    """
    if not isinstance(seed, (int, np.integer)):
        raise DomainError(f"master seed must be an integer, got {type(seed).__name__}")
    h = _mix64(int(seed) & _M64)
    for byte in label.encode("utf-8"):
        h = _mix64((h + _GAMMA) ^ byte)
    for ix in indices:
        h = _mix64((h + _GAMMA) ^ (int(ix) & _M64))
    lo = _mix64((h + _GAMMA) & _M64)
    hi = _mix64((h + 2 * _GAMMA) & _M64)
    return (hi << 64) | lo


def derive_seed(seed, label, *indices):
    """64-bit sub-seed (for handing to APIs that take a master seed)."""
    return derive_key(seed, label, *indices) & _M64


def generator(seed, label, *indices):
    """Fresh Philox generator for the named stream."""
    return np.random.Generator(np.random.Philox(key=derive_key(seed, label, *indices)))
