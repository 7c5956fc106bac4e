"""Keyed random streams for the Monte Carlo kernels.

Generator family (fixed for this release): xoshiro256** whose 256-bit state
is derived from ``(seed, stream, walker)`` through the SplitMix64 finalizer.
The finalizer is a bijection, so distinct key triples always give distinct
states, and a walker's draws never depend on which thread simulated it or
in what order.

Bernoulli(q) draws compare a raw 64-bit output with ``floor(q * 2**64)``;
for the binary value of q that threshold is exact whenever q >= 2**-11.
"""
from __future__ import annotations

from fractions import Fraction

import numba as nb
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
WARMUP = 8
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


@nb.njit(cache=True, inline="always")
def splitmix_mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@nb.njit(cache=True, inline="always")
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@nb.njit(cache=True)
def keyed_state(seed, stream, walker):
    """Fresh xoshiro256** state for one walker, already warmed up."""
    st = np.empty(4, dtype=np.uint64)
    st[0] = splitmix_mix(np.uint64(seed) + GOLDEN)
    st[1] = splitmix_mix(np.uint64(stream) + GOLDEN * np.uint64(2))
    st[2] = splitmix_mix(np.uint64(walker) + GOLDEN * np.uint64(3))
    st[3] = splitmix_mix(st[0] ^ st[1] ^ st[2] ^ GOLDEN)
    for _ in range(WARMUP):
        next_u64(st)
    return st


@nb.njit(cache=True, inline="always")
def next_u64(st):
    result = _rotl(st[1] * np.uint64(5), 7) * np.uint64(9)
    t = st[1] << np.uint64(17)
    st[2] ^= st[0]
    st[3] ^= st[1]
    st[1] ^= st[2]
    st[0] ^= st[3]
    st[2] ^= t
    st[3] = _rotl(st[3], 45)
    return result


@nb.njit(cache=True, inline="always")
def next_unit(st):
    """Uniform double in (0, 1], 53-bit resolution."""
    return (np.float64(next_u64(st) >> np.uint64(11)) + 1.0) * (1.0 / 9007199254740992.0)


def bernoulli_threshold(q: float) -> np.uint64:
    """Integer threshold with P(u64 < threshold) == q (to 2**-64)."""
    return np.uint64(min(int(Fraction(q) * (1 << 64)), _MASK64))


def seed_word(seed: int) -> np.uint64:
    """Reduce an arbitrary Python int seed to 64 bits."""
    return np.uint64(int(seed) & _MASK64)
