"""Pinned pseudo-random generator and seed splitting.

All stochastic choices in the placement path (annealer moves, random
baselines) draw from SplitMix64 (Steele, Lea & Flood 2014):

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    out = z ^ (z >> 31)

with all arithmetic mod 2**64. A uniform double in [0, 1) is
``(out >> 11) * 2**-53``. Any port that implements these lines reproduces the
annealer trajectories exactly.

Sub-seeds are derived from a master seed as
``(master + int.from_bytes(sha256(tag).digest()[:8], "little")) mod 2**64``
so every stage can be re-run in isolation.
"""
import hashlib

import numpy as np

from ._accel import kernel

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
INV_2_53 = 1.0 / 9007199254740992.0

_GOLDEN = np.uint64(GOLDEN)
_MIX1 = np.uint64(MIX1)
_MIX2 = np.uint64(MIX2)
_S11 = np.uint64(11)
_S27 = np.uint64(27)
_S30 = np.uint64(30)
_S31 = np.uint64(31)


def mix64(z):
    """SplitMix64 output finalizer on a Python int."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """Pure-Python SplitMix64 stream, used outside the compiled kernels."""

    def __init__(self, seed):
        self.state = int(seed) & MASK64

    def next_u64(self):
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def random(self):
        return (self.next_u64() >> 11) * INV_2_53

    def below(self, bound):
        """Integer in [0, bound) as ``floor(random() * bound)``."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        j = int(self.random() * bound)
        return min(j, bound - 1)


def derive_seed(master, tag):
    """Sub-seed for ``tag`` from ``master`` (see module docstring)."""
    digest = hashlib.sha256(str(tag).encode("utf-8")).digest()
    return (int(master) + int.from_bytes(digest[:8], "little")) & MASK64


def replica_seed(seed, replica):
    """Starting state of replica ``replica``'s stream."""
    return mix64((int(seed) + int(replica)) & MASK64)


@kernel
def _mix64_u(z):
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@kernel
def next_double(state):
    """Advance a length-1 uint64 state array; return a uniform in [0, 1)."""
    state[0] += _GOLDEN
    return float(_mix64_u(state[0]) >> _S11) * INV_2_53
