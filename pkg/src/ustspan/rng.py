"""Reproducible random streams for the numba kernels.

Every kernel draws from a xoshiro256** state (four uint64 words) that is
advanced in place.  States are derived from ``(seed, cell, stream)`` with
numpy's ``SeedSequence`` so that independent samples never share a stream
and any single sample can be replayed on its own.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

GENERATOR_NAME = "xoshiro256**+SeedSequence"

_M32 = np.uint64(0xFFFFFFFF)


@dataclass
class RngStream:
    """A stream identified by ``(seed, stream)``; ``cell`` separates sweep cells.

    The ``state`` array is consumed by the kernels, so calling two samplers
    with the same ``RngStream`` object gives two different (but still
    reproducible) results.
    """

    seed: int
    stream: int = 0
    cell: int = 0
    state: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.reset()

    def reset(self) -> None:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.cell), int(self.stream)))
        st = ss.generate_state(4, np.uint64)
        if not st.any():  # all-zero is the one forbidden xoshiro state
            st[0] = np.uint64(1)
        self.state = st

    def spawn(self, stream: int) -> "RngStream":
        return RngStream(self.seed, stream, self.cell)

    def integers(self, k: int, size: int) -> np.ndarray:
        """Uniform draws from ``range(k)``, ``1 <= k < 2**32``; used by the Python-level helpers."""
        if not 1 <= k < 2 ** 32:
            raise ValueError(f"k must be in [1, 2**32), got {k}")
        return _integers(self.state, np.uint64(k), size)

    def key(self) -> int:
        """A raw 64-bit word, e.g. to couple two probes on the same walks."""
        return int(next_u64(self.state))

    def random(self, size: int) -> np.ndarray:
        return _uniforms(self.state, size)


@numba.njit(cache=True, inline="always")
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@numba.njit(cache=True)
def next_u64(s):
    s0 = s[0]
    s1 = s[1]
    s2 = s[2]
    s3 = s[3]
    result = _rotl(s1 * np.uint64(5), 7) * np.uint64(9)
    t = s1 << np.uint64(17)
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    s[0] = s0
    s[1] = s1
    s[2] = s2
    s[3] = s3
    return result


@numba.njit(cache=True)
def bounded(s, k):
    """Unbiased draw from ``[0, k)`` for ``k < 2**32`` (Lemire's method)."""
    k = np.uint64(k)
    m = (next_u64(s) >> np.uint64(32)) * k
    low = m & _M32
    if low < k:
        thresh = (np.uint64(0x100000000) - k) % k
        while low < thresh:
            m = (next_u64(s) >> np.uint64(32)) * k
            low = m & _M32
    return np.int64(m >> np.uint64(32))


@numba.njit(cache=True)
def uniform01(s):
    return np.float64(next_u64(s) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True)
def _integers(s, k, size):
    out = np.empty(size, np.int64)
    for i in range(size):
        out[i] = bounded(s, k)
    return out


@numba.njit(cache=True)
def _uniforms(s, size):
    out = np.empty(size, np.float64)
    for i in range(size):
        out[i] = uniform01(s)
    return out
