"""SplitMix64: the single random generator used everywhere in the package.

Algorithm (Steele, Lea & Flood 2014, finalizer "Mix13"): the state is a
64-bit counter advanced by ``GAMMA = 0x9E3779B97F4A7C15`` per draw; each
output is ``mix64(state)`` where::

    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z =  z ^ (z >> 31)

all modulo 2**64.

Derived streams::

    derive(seed)          = mix64((seed mod 2**64) ^ SALT)
    derive(seed, i, ...)  = mix64(derive(seed, ...prefix) + (i + 1) * GAMMA)

with ``SALT = 0x5EEDF0CE57A11E57``.  A stream is identified by its path of
non-negative integers, so e.g. tree ``i`` of a forest with master seed ``s``
always draws from ``derive(s, TREES, i)`` whatever the execution order.

Integer draws use the top 53 bits: ``uniform_int(n) = floor(u * n)`` with
``u = (next >> 11) * 2**-53``.  Permutations are Fisher-Yates from the last
index down.  Every operation is IEEE-754/uint64 exact, so streams are
identical across platforms.
"""

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
SALT = 0x5EEDF0CE57A11E57

# stream namespaces
SPLIT = 1
TREES = 2
PERMUTE = 3
ALTMANN = 4
TUNE = 5
TREE_COUNT = 6

_GAMMA = np.uint64(GAMMA)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S11 = np.uint64(11)
_S27 = np.uint64(27)
_S30 = np.uint64(30)
_S31 = np.uint64(31)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def next_u64(state):
    state[0] += _GAMMA
    return mix64(state[0])


@njit(cache=True)
def uniform_int(state, n):
    u = np.float64(next_u64(state) >> _S11) * _INV53
    return np.int64(u * n)


@njit(cache=True)
def _permutation(state, n):
    out = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = uniform_int(state, i + 1)
        tmp = out[i]
        out[i] = out[j]
        out[j] = tmp
    return out


def _mix(value):
    return int(mix64(np.uint64(value & MASK64)))


def derive(seed, *path):
    """Seed of the sub-stream identified by ``path`` under ``seed``."""
    s = _mix((int(seed) & MASK64) ^ SALT)
    for i in path:
        if i < 0:
            raise ValueError("stream indices must be non-negative")
        s = _mix(s + (int(i) + 1) * GAMMA)
    return s


class SplitMix64:
    """Stateful generator; ``SplitMix64(derive(seed, ...))`` for a stream."""

    def __init__(self, seed):
        self._state = np.array([int(seed) & MASK64], dtype=np.uint64)

    @classmethod
    def stream(cls, seed, *path):
        return cls(derive(seed, *path))

    @property
    def state(self):
        return int(self._state[0])

    def next_u64(self):
        return int(next_u64(self._state))

    def integers(self, n, size):
        if n < 1:
            raise ValueError("n must be positive")
        return np.array([uniform_int(self._state, n) for _ in range(size)], dtype=np.int64)

    def permutation(self, n):
        return _permutation(self._state, int(n))
