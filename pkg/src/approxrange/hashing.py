"""Universe reduction by a block-shifting hash.

Points are cut into blocks of ``r`` consecutive values; every block is
rotated on the ring ``[r]`` by an amount drawn from a tabulation hash of the
block index.  Short intervals therefore map onto at most two circular arcs,
while two points from different blocks collide with probability ``1/r``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from ._jit import kernel

from .core import Interval, Params

GOLDEN = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """One step of splitmix64: returns ``(new_state, output)``."""
    state = (state + GOLDEN) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def splitmix_stream(seed: int, count: int) -> np.ndarray:
    out = np.empty(count, dtype=np.uint64)
    state = seed & _MASK64
    for i in range(count):
        state, out[i] = splitmix64(state)
    return out


@kernel
def tab_eval(tables, key):
    v = np.uint64(0)
    for i in range(8):
        v ^= tables[i, (key >> np.uint64(8 * i)) & np.uint64(255)]
    return v


@kernel
def h_eval(tables, rbits, mask, x):
    if rbits >= 64:
        block = np.uint64(0)
    else:
        block = x >> np.uint64(rbits)
    return (tab_eval(tables, block) + x) & mask


@kernel
def _push_arc(start, length_m1, mask, out, k):
    # circular arc {start, ..., start + length_m1} (mod r) as linear pieces
    room = mask - start
    if length_m1 <= room:
        out[k, 0] = start
        out[k, 1] = start + length_m1
        return k + 1
    out[k, 0] = start
    out[k, 1] = mask
    out[k + 1, 0] = np.uint64(0)
    out[k + 1, 1] = length_m1 - room - np.uint64(1)
    return k + 2


@kernel
def image_kernel(tables, rbits, mask, a, b, out):
    """Write the image of ``[a, b]`` as linear intervals into ``out``; return their count.

    Requires ``b - a < r``, so the interval meets at most two blocks.
    """
    ha = h_eval(tables, rbits, mask, a)
    if rbits >= 64 or (a >> np.uint64(rbits)) == (b >> np.uint64(rbits)):
        return _push_arc(ha, b - a, mask, out, 0)
    k = _push_arc(ha, mask - (a & mask), mask, out, 0)
    hb0 = h_eval(tables, rbits, mask, b & ~mask)
    return _push_arc(hb0, b & mask, mask, out, k)


class TabulationHash:
    """Simple tabulation over the 8 bytes of a 64-bit key, masked to ``[r]``."""

    def __init__(self, seed: int, r: int):
        self.seed = seed
        self.r = r
        self.tables = splitmix_stream(seed, 8 * 256).reshape(8, 256)

    @classmethod
    def from_tables(cls, tables, r: int) -> "TabulationHash":
        obj = cls.__new__(cls)
        obj.seed = None
        obj.r = r
        obj.tables = np.ascontiguousarray(tables, dtype=np.uint64).reshape(8, 256)
        return obj

    @property
    def mask(self) -> np.uint64:
        return np.uint64(self.r - 1)

    def raw(self, key: int) -> int:
        return int(tab_eval(self.tables, np.uint64(key)))

    def __call__(self, key: int) -> int:
        return self.raw(key) & (self.r - 1)


@dataclass(frozen=True)
class CircularInterval:
    start: int
    len: int

    def linear(self, r: int) -> list[Interval]:
        if not 1 <= self.len <= r:
            raise ValueError("arc length must lie in 1..r")
        end = self.start + self.len - 1
        if end < r:
            return [Interval(self.start, end)]
        return [Interval(self.start, r - 1), Interval(0, end - r)]

    def covers(self, v: int, r: int) -> bool:
        return (v - self.start) % r < self.len


class LocalityHash:
    """``h(x) = (u(x // r) + x) mod r`` with ``u`` a tabulation hash."""

    def __init__(self, params: Params, u: TabulationHash | None = None):
        self.params = params
        self.u = u if u is not None else TabulationHash(params.seed, params.r)
        self.rbits = params.r_bits
        self.mask = np.uint64(params.r - 1)

    @property
    def r(self) -> int:
        return self.params.r

    def block(self, x: int) -> int:
        return x >> self.rbits

    def __call__(self, x: int) -> int:
        if not 0 <= x < self.params.U:
            raise ValueError(f"point {x} outside universe")
        return int(h_eval(self.u.tables, self.rbits, self.mask, np.uint64(x)))

    def many(self, xs: np.ndarray) -> np.ndarray:
        return _h_many(self.u.tables, self.rbits, self.mask, np.asarray(xs, dtype=np.uint64))

    def arcs(self, interval: Interval) -> list[CircularInterval]:
        """The image of ``interval`` as one circular arc per block it touches."""
        a, b, r = interval.a, interval.b, self.r
        if b - a + 1 > r:
            raise ValueError(f"interval of length {b - a + 1} exceeds r={r}")
        if a >> self.rbits == b >> self.rbits:
            return [CircularInterval(self(a), b - a + 1)]
        split = (a | (r - 1)) + 1
        return [CircularInterval(self(a), split - a), CircularInterval(self(split), b - split + 1)]

    def image(self, interval: Interval) -> list[Interval]:
        """Exact image of ``interval`` as at most four linear intervals in ``[r]``."""
        if interval.b >= self.params.U:
            raise ValueError("interval outside universe")
        if interval.b - interval.a + 1 > self.r:
            raise ValueError(f"interval of length {interval.length} exceeds r={self.r}")
        buf = np.zeros((4, 2), dtype=np.uint64)
        k = image_kernel(self.u.tables, self.rbits, self.mask,
                         np.uint64(interval.a), np.uint64(interval.b), buf)
        return [Interval(int(buf[i, 0]), int(buf[i, 1])) for i in range(k)]


@nb.njit(cache=True)
def _h_many(tables, rbits, mask, xs):
    out = np.empty_like(xs)
    for i in range(xs.shape[0]):
        out[i] = h_eval(tables, rbits, mask, xs[i])
    return out


def new_locality_hash(params: Params) -> LocalityHash:
    return LocalityHash(params)
