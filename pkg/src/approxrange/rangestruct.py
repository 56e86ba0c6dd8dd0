"""Exact succinct range emptiness and reporting over a power-of-two universe.

The universe ``[R]`` is cut into ``B`` equal buckets.  ``D1`` marks the
non-empty buckets, ``D2`` stores ``1 0^c`` for every non-empty bucket holding
``c`` points, and the bucket-relative offsets of all points are packed in
one array of fixed-width fields.  Inside a bucket, emptiness of ``[a, b]``
reduces to two weak prefix searches around the longest common prefix of
``a`` and ``b``.

Two weak prefix indexes are provided: ``binary`` (two binary searches over
the bucket's sorted offsets, no extra space) and ``zfast`` (a compacted trie
whose nodes are stored in a hash table keyed by their handles, searched with
a fat binary search over prefix lengths).
"""

from __future__ import annotations

import bisect
from collections import namedtuple
from enum import IntEnum

import numpy as np

from ._jit import kernel

from .core import Interval, PointSet
from .succinct import BitVector, bv_get, bv_rank1, bv_select1

_U0 = np.uint64(0)
_U1 = np.uint64(1)
_EMPTY_TABLE = np.zeros(0, dtype=np.uint64)


class IndexKind(IntEnum):
    BINARY = 0
    ZFAST = 1

    @classmethod
    def parse(cls, value) -> "IndexKind":
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            return cls[value.upper().replace("-", "")]
        return cls(value)


# Hash table of compacted-trie nodes.  Slot arrays are concatenated over all
# non-empty buckets; ``base[j]:base[j+1]`` is the table of the j-th one.
ZTable = namedtuple("ZTable", ["base", "key", "ext", "lo", "split", "hi"])

RangeArrays = namedtuple("RangeArrays", ["n", "k", "kmask", "kind", "d1", "d2", "off", "zt"])


# ---------------------------------------------------------------- bit kernels


@kernel
def msb64(x):
    r = 0
    if x >> np.uint64(32):
        x >>= np.uint64(32)
        r += 32
    if x >> np.uint64(16):
        x >>= np.uint64(16)
        r += 16
    if x >> np.uint64(8):
        x >>= np.uint64(8)
        r += 8
    if x >> np.uint64(4):
        x >>= np.uint64(4)
        r += 4
    if x >> np.uint64(2):
        x >>= np.uint64(2)
        r += 2
    if x >> np.uint64(1):
        r += 1
    return r


@kernel
def packed_get(words, k, i):
    if k == 0:
        return _U0
    pos = i * k
    w = pos >> 6
    s = pos & 63
    v = words[w] >> np.uint64(s)
    if s + k > 64:
        v |= words[w + 1] << np.uint64(64 - s)
    if k < 64:
        v &= (_U1 << np.uint64(k)) - _U1
    return v


@kernel
def _mix(key):
    key ^= key >> np.uint64(31)
    key *= np.uint64(0x7FB5D329728EA185)
    key ^= key >> np.uint64(27)
    return key


@kernel
def fattest(x, y):
    """Number in ``(x, y]`` with the most trailing zeros (``x >= -1``)."""
    if x < 0:
        return 0
    return y & ~((1 << msb64(np.uint64(x ^ y))) - 1)


# ------------------------------------------------------- weak prefix search


@kernel
def wp_binary(off, k, start, cnt, pval, plen):
    """Exact rank interval of keys with prefix ``pval`` (``plen`` bits); empty if hi < lo."""
    if plen == 0:
        return 0, cnt - 1
    sh = np.uint64(k - plen)
    lo_key = pval << sh
    hi_key = lo_key | ((_U1 << sh) - _U1)
    lo, hi = 0, cnt
    while lo < hi:
        mid = (lo + hi) >> 1
        if packed_get(off, k, start + mid) < lo_key:
            lo = mid + 1
        else:
            hi = mid
    first = lo
    hi = cnt
    while lo < hi:
        mid = (lo + hi) >> 1
        if packed_get(off, k, start + mid) <= hi_key:
            lo = mid + 1
        else:
            hi = mid
    return first, lo - 1


@kernel
def z_lookup(zt, base, cap, key):
    if cap == 0:
        return -1
    slot = np.int64(_mix(key) & np.uint64(cap - 1))
    while True:
        s = zt.key[base + slot]
        if s == key:
            return base + slot
        if s == _U0:
            return -1
        slot = (slot + 1) & (cap - 1)


@kernel
def wp_zfast(zt, j, cnt, pval, plen):
    """Weak prefix search in the trie of the j-th non-empty bucket.

    Exact when some key carries the prefix; otherwise an arbitrary interval.
    """
    if plen == 0:
        return 0, cnt - 1
    base = zt.base[j]
    cap = zt.base[j + 1] - base
    x = -1
    y = plen - 1
    node = -1
    while x < y:
        f = fattest(x, y)
        if f == 0:
            key = _U1
        else:
            key = (pval >> np.uint64(plen - f)) | (_U1 << np.uint64(f))
        s = z_lookup(zt, base, cap, key)
        if s < 0:
            y = f - 1
            continue
        e = np.int64(zt.ext[s])
        if e >= plen:
            return np.int64(zt.lo[s]), np.int64(zt.hi[s])
        x = e
        node = s
    if node < 0:
        return 0, cnt - 1
    if (pval >> np.uint64(plen - 1 - x)) & _U1:
        return np.int64(zt.split[node]), np.int64(zt.hi[node])
    return np.int64(zt.lo[node]), np.int64(zt.split[node]) - 1


# ------------------------------------------------------------ query kernels


@kernel
def locate(rs, q):
    """(rank among non-empty buckets, first point rank, point count) of bucket q."""
    j = bv_rank1(rs.d1, q)
    s = bv_select1(rs.d2, j)
    if j + 1 < rs.d2.ones:
        e = bv_select1(rs.d2, j + 1)
    else:
        e = rs.d2.nbits
    return j, s - j, e - s - 1


@kernel
def _wp(rs, j, start, cnt, pval, plen):
    if rs.kind == 1:
        return wp_zfast(rs.zt, j, cnt, pval, plen)
    return wp_binary(rs.off, rs.k, start, cnt, pval, plen)


@kernel
def partial_find(rs, q, a, b):
    """Rank of some point of bucket q with offset in [a, b], or -1; plus weak-prefix calls."""
    if not bv_get(rs.d1, q):
        return -1, 0
    j, start, cnt = locate(rs, q)
    k = rs.k
    if a == b:
        lo, hi = _wp(rs, j, start, cnt, a, k)
        if 0 <= lo < cnt and packed_get(rs.off, k, start + lo) == a:
            return start + lo, 1
        return -1, 1
    plen = k - msb64(a ^ b)
    sh = np.uint64(k - plen)
    # largest key below the split point
    lo, hi = _wp(rs, j, start, cnt, a >> sh, plen)
    if 0 <= hi < cnt:
        v = packed_get(rs.off, k, start + hi)
        if a <= v and v <= b:
            return start + hi, 1
    # smallest key above it
    lo, hi = _wp(rs, j, start, cnt, b >> sh, plen)
    if 0 <= lo < cnt:
        v = packed_get(rs.off, k, start + lo)
        if a <= v and v <= b:
            return start + lo, 2
    return -1, 2


@kernel
def _bucket(x, k):
    if k >= 64:
        return 0
    return np.int64(x >> np.uint64(k))


@kernel
def _first_in_span(rs, qlo, qhi):
    j = bv_rank1(rs.d1, qlo)
    if bv_rank1(rs.d1, qhi + 1) > j:
        return bv_select1(rs.d2, j) - j
    return -1


@kernel
def find(rs, a, b):
    """Rank of some stored point in [a, b] (or -1), weak-prefix calls, partial parts."""
    if rs.n == 0:
        return -1, 0, 0
    k = rs.k
    qa = _bucket(a, k)
    qb = _bucket(b, k)
    oa = a & rs.kmask
    ob = b & rs.kmask
    if qa == qb:
        if oa == _U0 and ob == rs.kmask:
            if bv_get(rs.d1, qa):
                return bv_select1(rs.d2, bv_rank1(rs.d1, qa)) - bv_rank1(rs.d1, qa), 0, 0
            return -1, 0, 0
        i, c = partial_find(rs, qa, oa, ob)
        return i, c, 1
    lo_full = qa if oa == _U0 else qa + 1
    hi_full = qb if ob == rs.kmask else qb - 1
    if lo_full <= hi_full:
        i = _first_in_span(rs, lo_full, hi_full)
        if i >= 0:
            return i, 0, 0
    calls = 0
    parts = 0
    if oa != _U0:
        i, c = partial_find(rs, qa, oa, rs.kmask)
        calls += c
        parts += 1
        if i >= 0:
            return i, calls, parts
    if ob != rs.kmask:
        i, c = partial_find(rs, qb, _U0, ob)
        calls += c
        parts += 1
        if i >= 0:
            return i, calls, parts
    return -1, calls, parts


@kernel
def point_at(rs, q, i):
    v = packed_get(rs.off, rs.k, i)
    if rs.k >= 64:
        return v
    return (np.uint64(q) << np.uint64(rs.k)) | v


@kernel
def bucket_state(rs, j):
    """(bucket id, first rank, end rank) of the j-th non-empty bucket."""
    q = bv_select1(rs.d1, j)
    start = bv_select1(rs.d2, j) - j
    if j + 1 < rs.d2.ones:
        end = bv_select1(rs.d2, j + 1) - (j + 1)
    else:
        end = rs.n
    return q, start, end


@kernel
def report(rs, a, b, out):
    """Write S ∩ [a, b] in increasing order into ``out``; return the count."""
    i0 = find(rs, a, b)[0]
    if i0 < 0:
        return 0
    lo, hi = 0, rs.d2.ones - 1
    while lo < hi:
        mid = (lo + hi + 1) >> 1
        if bv_select1(rs.d2, mid) - mid <= i0:
            lo = mid
        else:
            hi = mid - 1
    j = lo
    q, start, end = bucket_state(rs, j)
    i = i0
    # extend left from the witness, hopping to the previous non-empty bucket via D1
    while i > 0:
        pj, pq, ps, pe = j, q, start, end
        if i - 1 < start:
            pj = j - 1
            pq, ps, pe = bucket_state(rs, pj)
        if point_at(rs, pq, i - 1) < a:
            break
        i -= 1
        j, q, start, end = pj, pq, ps, pe
    cnt = 0
    while i < rs.n:
        if i >= end:
            j += 1
            q, start, end = bucket_state(rs, j)
        v = point_at(rs, q, i)
        if v > b:
            break
        out[cnt] = v
        cnt += 1
        i += 1
    return cnt


@kernel
def find_many(rs, a, b, out):
    for t in range(a.shape[0]):
        out[t] = find(rs, a[t], b[t])[0] >= 0


# ------------------------------------------------------------------ builders


def _pack(values: np.ndarray, k: int) -> np.ndarray:
    n = len(values)
    words = np.zeros((n * k + 63) // 64 + 1, dtype=np.uint64)
    if k == 0 or n == 0:
        return words
    pos = np.arange(n, dtype=np.int64) * k
    w = pos >> 6
    s = (pos & 63).astype(np.uint64)
    np.bitwise_or.at(words, w, values << s)
    spill = (pos & 63) + k > 64
    if spill.any():
        np.bitwise_or.at(words, w[spill] + 1, values[spill] >> (np.uint64(64) - s[spill]))
    return words


def _fattest_py(x: int, y: int) -> int:
    if x < 0:
        return 0
    return y & ~((1 << (x ^ y).bit_length() - 1) - 1)


def trie_nodes(keys: list[int], k: int) -> list[tuple[int, int, int, int, int]]:
    """Internal nodes of the compacted trie over sorted distinct ``k``-bit keys.

    Each node is ``(handle_key, extent_len, lo, split, hi)`` with ranks relative
    to the key list; the left subtree holds ranks ``lo..split-1``.
    """
    out = []
    stack = [(0, len(keys) - 1, -1)]
    while stack:
        lo, hi, parent_ext = stack.pop()
        if hi <= lo:
            continue
        diff = keys[lo] ^ keys[hi]
        ext = k - diff.bit_length()
        bit = 1 << (k - 1 - ext)
        split = bisect.bisect_left(keys, (keys[lo] | bit) & ~(bit - 1), lo, hi + 1)
        f = _fattest_py(parent_ext, ext)
        handle = (keys[lo] >> (k - f)) | (1 << f) if f else 1
        out.append((handle, ext, lo, split, hi))
        stack.append((split, hi, ext))
        stack.append((lo, split - 1, ext))
    return out


_NODE_DTYPE = np.dtype([("key", "<u8"), ("ext", "u1"), ("lo", "<u4"), ("split", "<u4"), ("hi", "<u4")])


def _mix_py(key: int) -> int:
    key ^= key >> 31
    key = (key * 0x7FB5D329728EA185) & ((1 << 64) - 1)
    return key ^ (key >> 27)


def build_ztable(node_lists: list[np.ndarray]) -> ZTable:
    caps = []
    for nodes in node_lists:
        c = 0 if len(nodes) == 0 else 1 << (2 * len(nodes) - 1).bit_length()
        caps.append(c)
    base = np.zeros(len(caps) + 1, dtype=np.int64)
    base[1:] = np.cumsum(caps)
    total = int(base[-1])
    key = np.zeros(total, np.uint64)
    ext = np.zeros(total, np.uint8)
    lo = np.zeros(total, np.int64)
    split = np.zeros(total, np.int64)
    hi = np.zeros(total, np.int64)
    for j, nodes in enumerate(node_lists):
        cap, b = caps[j], int(base[j])
        for rec in nodes:
            hk = int(rec["key"])
            slot = _mix_py(hk) & (cap - 1)
            while key[b + slot]:
                slot = (slot + 1) & (cap - 1)
            key[b + slot] = hk
            ext[b + slot] = rec["ext"]
            lo[b + slot] = rec["lo"]
            split[b + slot] = rec["split"]
            hi[b + slot] = rec["hi"]
    return ZTable(base, key, ext, lo, split, hi)


def _empty_ztable() -> ZTable:
    z = np.zeros(0, np.int64)
    return ZTable(np.zeros(1, np.int64), _EMPTY_TABLE, np.zeros(0, np.uint8), z, z, z)


class BucketedRangeStructure:
    """Static exact range emptiness/reporting over ``[2**R_bits]``."""

    def __init__(self, points, R_bits: int, index_kind="binary"):
        if not 0 <= R_bits <= 64:
            raise ValueError("R_bits must be in 0..64")
        if isinstance(points, PointSet):
            pts = points.pts
        else:
            pts = np.asarray(points, dtype=np.uint64)
            if len(pts) and len(points) and not isinstance(points, np.ndarray):
                if min(int(p) for p in points) < 0:
                    raise ValueError("negative point")
        pts = np.ascontiguousarray(pts, dtype=np.uint64)
        if len(pts) > 1 and not np.all(pts[1:] > pts[:-1]):
            raise ValueError("points must be strictly increasing (sorted, distinct)")
        if len(pts) and R_bits < 64 and int(pts[-1]) >= 1 << R_bits:
            raise ValueError(f"point {int(pts[-1])} outside universe 2^{R_bits}")
        n = len(pts)
        self.R_bits = R_bits
        self.n = n
        self.B_bits = min(max(n - 1, 0).bit_length(), R_bits)
        self.k = R_bits - self.B_bits
        self.kind = IndexKind.parse(index_kind)

        kmask = np.uint64((1 << self.k) - 1)
        buckets = np.zeros(n, np.int64) if self.k >= 64 else (pts >> np.uint64(self.k)).astype(np.int64)
        offsets = pts & kmask
        ids, counts = np.unique(buckets, return_counts=True)

        d1 = np.zeros(self.B, np.uint8)
        d1[ids] = 1
        d2 = np.zeros(len(ids) + n, np.uint8)
        if len(ids):
            d2[np.arange(len(ids)) + np.concatenate(([0], np.cumsum(counts)[:-1]))] = 1
        self.d1 = BitVector(d1)
        self.d2 = BitVector(d2)
        self.off = _pack(offsets, self.k)

        self.nodes: list[np.ndarray] = []
        if self.kind is IndexKind.ZFAST:
            keys = offsets.tolist()
            at = 0
            for c in counts.tolist():
                recs = trie_nodes(keys[at:at + c], self.k)
                self.nodes.append(np.array(recs, dtype=_NODE_DTYPE))
                at += c
        self._finish()

    def _finish(self):
        zt = build_ztable(self.nodes) if self.kind is IndexKind.ZFAST else _empty_ztable()
        self.arrays = RangeArrays(
            np.int64(self.n), np.int64(self.k), np.uint64((1 << self.k) - 1),
            np.int64(int(self.kind)), self.d1.arrays, self.d2.arrays, self.off, zt,
        )

    @classmethod
    def from_parts(cls, R_bits, n, B_bits, kind, d1, d2, off_words, nodes):
        obj = cls.__new__(cls)
        obj.R_bits, obj.n, obj.B_bits = R_bits, n, B_bits
        obj.k = R_bits - B_bits
        obj.kind = IndexKind.parse(kind)
        obj.d1, obj.d2 = d1, d2
        full = np.zeros((n * obj.k + 63) // 64 + 1, dtype=np.uint64)
        full[: len(off_words)] = off_words
        obj.off = full
        obj.nodes = list(nodes)
        obj._finish()
        return obj

    # -- geometry

    @property
    def R(self) -> int:
        return 1 << self.R_bits

    @property
    def B(self) -> int:
        return 1 << self.B_bits

    @property
    def bucket_width(self) -> int:
        return 1 << self.k

    def offset_words(self) -> np.ndarray:
        return self.off[: (self.n * self.k + 63) // 64].copy()

    def offsets(self) -> list[int]:
        return [int(packed_get(self.off, self.k, i)) for i in range(self.n)]

    def points(self) -> list[int]:
        out = []
        for j in range(self.d1.popcount):
            q = self.d1.select1(j)
            s = self.d2.select1(j) - j
            e = (self.d2.select1(j + 1) - (j + 1)) if j + 1 < self.d2.popcount else self.n
            out.extend((q << self.k) | int(packed_get(self.off, self.k, i)) for i in range(s, e))
        return out

    def bucket(self, q: int) -> tuple[int, int]:
        """(first rank, count) of bucket ``q``; count 0 when empty."""
        if not self.d1[q]:
            return self.d1.rank1(q), 0
        _, start, cnt = locate(self.arrays, q)
        return int(start), int(cnt)

    # -- queries

    def _check(self, interval: Interval):
        if interval.b >= self.R:
            raise ValueError(f"interval [{interval.a}, {interval.b}] outside universe 2^{self.R_bits}")

    def query(self, interval: Interval) -> bool:
        self._check(interval)
        return find(self.arrays, np.uint64(interval.a), np.uint64(interval.b))[0] >= 0

    def probe(self, interval: Interval) -> tuple[bool, int, int]:
        """Answer plus instrumentation: (non-empty, weak-prefix calls, partial parts)."""
        self._check(interval)
        i, calls, parts = find(self.arrays, np.uint64(interval.a), np.uint64(interval.b))
        return i >= 0, int(calls), int(parts)

    def query_many(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        out = np.zeros(len(a), dtype=np.bool_)
        find_many(self.arrays, np.asarray(a, np.uint64), np.asarray(b, np.uint64), out)
        return out

    def report(self, interval: Interval) -> list[int]:
        self._check(interval)
        out = np.zeros(max(self.n, 1), dtype=np.uint64)
        cnt = report(self.arrays, np.uint64(interval.a), np.uint64(interval.b), out)
        return out[:cnt].tolist()

    def weak_prefix(self, q: int, prefix) -> tuple[int, int]:
        """Bucket-relative rank interval for ``prefix`` inside bucket ``q``."""
        if not self.d1[q]:
            raise ValueError(f"bucket {q} is empty")
        j, start, cnt = locate(self.arrays, q)
        lo, hi = _wp(self.arrays, j, start, cnt, np.uint64(prefix.value), prefix.length)
        return int(lo), int(hi)

    # -- space

    def index_bits(self) -> int:
        if self.kind is not IndexKind.ZFAST:
            return 0
        return sum(32 + 8 * _NODE_DTYPE.itemsize * len(nodes) for nodes in self.nodes)

    def space(self) -> dict:
        return {
            "offsets": 64 * ((self.n * self.k + 63) // 64),
            "d1": self.d1.payload_bits,
            "d2": self.d2.payload_bits,
            "index": self.index_bits(),
            "directories": self.d1.overhead_bits + self.d2.overhead_bits,
        }

    def __repr__(self) -> str:
        return f"BucketedRangeStructure(n={self.n}, R=2^{self.R_bits}, B=2^{self.B_bits}, index={self.kind.name.lower()})"


class PrefixIndex:
    """Weak prefix search over one sorted set of ``width``-bit keys."""

    def __init__(self, keys, width: int, kind="binary"):
        keys = sorted(int(x) for x in keys)
        self.width = width
        self.kind = IndexKind.parse(kind)
        self.keys = keys
        self.off = _pack(np.array(keys, dtype=np.uint64), width)
        nodes = np.array(trie_nodes(keys, width), dtype=_NODE_DTYPE) if keys else np.zeros(0, _NODE_DTYPE)
        self.zt = build_ztable([nodes])

    def search(self, prefix) -> tuple[int, int]:
        cnt = len(self.keys)
        if self.kind is IndexKind.ZFAST:
            lo, hi = wp_zfast(self.zt, 0, cnt, np.uint64(prefix.value), prefix.length)
        else:
            lo, hi = wp_binary(self.off, self.width, 0, cnt, np.uint64(prefix.value), prefix.length)
        return int(lo), int(hi)


class SortedOracle:
    """Ground truth via binary search over a sorted array."""

    def __init__(self, points):
        self.pts = np.sort(np.asarray(points, dtype=np.uint64))

    def successor_index(self, x: int) -> int:
        return int(np.searchsorted(self.pts, np.uint64(x), side="left"))

    def query(self, interval: Interval) -> bool:
        i = self.successor_index(interval.a)
        return i < len(self.pts) and int(self.pts[i]) <= interval.b

    def report(self, interval: Interval) -> list[int]:
        i = self.successor_index(interval.a)
        j = int(np.searchsorted(self.pts, np.uint64(interval.b), side="right"))
        return self.pts[i:j].tolist()


def oracle_query(oracle: SortedOracle, interval: Interval) -> bool:
    return oracle.query(interval)


def build_bucketed(points, R_bits: int, index_kind="binary") -> BucketedRangeStructure:
    return BucketedRangeStructure(points, R_bits, index_kind)
