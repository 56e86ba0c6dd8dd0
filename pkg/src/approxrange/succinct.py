"""Bit vector with rank/select directories.

Layout: 64-bit payload words, absolute ranks per 512-bit superblock, 16-bit
ranks per word relative to its superblock, and the position of every
1024th one for select.  The kernels are numba functions over a
``BitArrays`` tuple so the range structure can call them without leaving
compiled code.
"""

from __future__ import annotations

from collections import namedtuple

import numpy as np

from ._jit import kernel

WORDS_PER_SUPER = 8
SELECT_SAMPLE = 1024

BitArrays = namedtuple("BitArrays", ["words", "nbits", "ones", "sb", "blk", "sel"])

_U1 = np.uint64(1)
_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)


@kernel
def popcount64(x):
    x = x - ((x >> np.uint64(1)) & _M1)
    x = (x & _M2) + ((x >> np.uint64(2)) & _M2)
    x = (x + (x >> np.uint64(4))) & _M4
    return np.int64((x * _H01) >> np.uint64(56))


@kernel
def select_in_word(x, j):
    # position of the j-th (0-based) set bit of x, by halving
    pos = 0
    width = 32
    while width:
        low = x & ((_U1 << np.uint64(width)) - _U1)
        c = popcount64(low)
        if j >= c:
            j -= c
            x >>= np.uint64(width)
            pos += width
        else:
            x = low
        width >>= 1
    return pos


@kernel
def bv_get(bv, i):
    return (bv.words[i >> 6] >> np.uint64(i & 63)) & _U1 == _U1


@kernel
def bv_rank1(bv, i):
    """Ones strictly before position ``i`` (0 <= i <= nbits)."""
    w = i >> 6
    below = (_U1 << np.uint64(i & 63)) - _U1
    return np.int64(bv.sb[w >> 3]) + np.int64(bv.blk[w]) + popcount64(bv.words[w] & below)


@kernel
def bv_select1(bv, j):
    """Position of the one with rank ``j`` (0 <= j < ones)."""
    t = j >> 10
    lo = bv.sel[t] >> 9
    if t + 1 < bv.sel.shape[0]:
        hi = bv.sel[t + 1] >> 9
    else:
        hi = bv.sb.shape[0] - 1
    while lo < hi:
        mid = (lo + hi + 1) >> 1
        if np.int64(bv.sb[mid]) <= j:
            lo = mid
        else:
            hi = mid - 1
    rem = j - np.int64(bv.sb[lo])
    w = lo << 3
    end = min(w + WORDS_PER_SUPER, bv.words.shape[0])
    while w + 1 < end and np.int64(bv.blk[w + 1]) <= rem:
        w += 1
    rem -= np.int64(bv.blk[w])
    return (w << 6) + select_in_word(bv.words[w], rem)


def _directories(words: np.ndarray, nbits: int) -> BitArrays:
    counts = np.bitwise_count(words).astype(np.int64)
    before = np.concatenate(([0], np.cumsum(counts)[:-1])) if len(counts) else np.zeros(0, np.int64)
    sb = before[::WORDS_PER_SUPER].astype(np.uint64)
    blk = (before - np.repeat(before[::WORDS_PER_SUPER], WORDS_PER_SUPER)[: len(before)]).astype(np.uint16)
    ones = int(counts.sum())
    # positions of ones with rank 0, 1024, 2048, ...
    sel = []
    if ones:
        bits = np.unpackbits(words.view(np.uint8), bitorder="little")
        pos = np.flatnonzero(bits)
        sel = pos[::SELECT_SAMPLE]
    sel = np.asarray(sel, dtype=np.int64)
    return BitArrays(words, np.int64(nbits), np.int64(ones), sb, blk, sel)


class BitVector:
    """Immutable bit vector supporting constant-time rank and select."""

    __slots__ = ("arrays",)

    def __init__(self, bits=()):
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.ndim != 1 or (bits.size and bits.max() > 1):
            raise ValueError("expected a 1-d sequence of 0/1 values")
        self.arrays = self._from_bool(bits)

    @staticmethod
    def _from_bool(bits: np.ndarray) -> BitArrays:
        nbits = len(bits)
        # one spare word so rank1(nbits) never indexes past the end
        nwords = nbits // 64 + 1
        buf = np.zeros(nwords * 64, dtype=np.uint8)
        buf[:nbits] = bits
        words = np.packbits(buf, bitorder="little").view("<u8").astype(np.uint64)
        return _directories(words, nbits)

    @classmethod
    def from_words(cls, words, nbits: int) -> "BitVector":
        """Rebuild from serialized payload words (directories are recomputed)."""
        need = (nbits + 63) // 64
        words = np.asarray(words, dtype=np.uint64)
        if len(words) != need:
            raise ValueError(f"expected {need} payload words for {nbits} bits, got {len(words)}")
        full = np.zeros(nbits // 64 + 1, dtype=np.uint64)
        full[:need] = words
        if nbits % 64:
            full[need - 1] &= np.uint64((1 << (nbits % 64)) - 1)
        obj = cls.__new__(cls)
        obj.arrays = _directories(full, nbits)
        return obj

    def __len__(self) -> int:
        return int(self.arrays.nbits)

    def __getitem__(self, i: int) -> int:
        if not 0 <= i < len(self):
            raise IndexError(i)
        return int(bv_get(self.arrays, i))

    @property
    def popcount(self) -> int:
        return int(self.arrays.ones)

    def rank1(self, i: int) -> int:
        if not 0 <= i <= len(self):
            raise IndexError(f"rank position {i} outside [0, {len(self)}]")
        return int(bv_rank1(self.arrays, i))

    def select1(self, j: int) -> int:
        if not 0 <= j < self.popcount:
            raise IndexError(f"select rank {j} outside [0, {self.popcount})")
        return int(bv_select1(self.arrays, j))

    def payload_words(self) -> np.ndarray:
        return self.arrays.words[: (len(self) + 63) // 64].copy()

    def to_list(self) -> list[int]:
        bits = np.unpackbits(self.arrays.words.view(np.uint8), bitorder="little")
        return bits[: len(self)].tolist()

    @property
    def payload_bits(self) -> int:
        return 64 * ((len(self) + 63) // 64)

    @property
    def overhead_bits(self) -> int:
        """Directory size in bits (superblock, word and select tables)."""
        a = self.arrays
        return 64 * len(a.sb) + 16 * len(a.blk) + 64 * len(a.sel)

    def __repr__(self) -> str:
        return f"BitVector(len={len(self)}, ones={self.popcount})"
