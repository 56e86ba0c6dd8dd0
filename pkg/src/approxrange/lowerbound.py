"""Lossless codec for well-separated point sets driven by a one-sided range filter.

The encoder stores the filter bytes, names which of the filter's positive top
intervals really hold a point, and then, for every point and covering level,
spends one bit only when both covering intervals come back positive.  The
decoder replays the same queries to rebuild the set.
"""

from __future__ import annotations

import bisect
import itertools
import math
import random
import struct
from dataclasses import dataclass
from fractions import Fraction
from math import comb

import numpy as np

from .core import Interval, ParamError, is_pow2, validate_params
from .filter import FilterFormatError, RangeFilter

_LB_HEADER = struct.Struct("<QQ")  # len(M*) in bytes, |T*|
LB_HEADER_BITS = 8 * _LB_HEADER.size


class DecodeError(ValueError):
    """The encoding is malformed or does not match the decoder's replay."""


# ------------------------------------------------------------------ sets


@dataclass(frozen=True)
class WellSepSet:
    points: tuple[int, ...]
    n: int
    w: int
    L: int

    @property
    def U(self) -> int:
        return 1 << self.w

    def __post_init__(self):
        if not is_valid_wellsep(self.points, self.w, self.L):
            raise ValueError("points are not L-well-separated")
        if len(self.points) != self.n:
            raise ValueError("point count does not match n")


def is_valid_wellsep(points, w: int, L: int) -> bool:
    U = 1 << w
    pts = list(points)
    if any(b <= a for a, b in zip(pts, pts[1:])):
        return False
    if pts and (pts[0] < 2 * L - 1 or pts[-1] > U - 2 * L):
        return False
    return all(b - a >= 2 * L for a, b in zip(pts, pts[1:]))


def _check_shape(w: int, L: int):
    if not 1 <= w <= 64:
        raise ParamError("universe bits must be in 1..64")
    if not is_pow2(L) or L > 1 << w:
        raise ParamError("L must be a power of two no larger than U")


def gen_wellsep(n: int, w: int, L: int, seed: int, max_tries: int | None = None) -> WellSepSet:
    """Random L-well-separated set by rejection sampling; requires ``L <= U/(5n)``."""
    _check_shape(w, L)
    U = 1 << w
    if n < 0 or (n and 5 * n * L > U):
        raise ParamError(f"need L <= U/(5n): n={n}, L={L}, U=2^{w}")
    rng = random.Random(seed)
    lo, hi = 2 * L - 1, U - 2 * L
    chosen: list[int] = []
    tries = max_tries if max_tries is not None else 1000 * (n + 1)
    while len(chosen) < n:
        if tries == 0:
            raise RuntimeError("retry cap exceeded while sampling a well-separated set")
        tries -= 1
        x = rng.randint(lo, hi)
        k = bisect.bisect_left(chosen, x)
        if k < len(chosen) and chosen[k] - x < 2 * L:
            continue
        if k > 0 and x - chosen[k - 1] < 2 * L:
            continue
        chosen.insert(k, x)
    return WellSepSet(tuple(chosen), n, w, L)


def count_wellsep_sets(n: int, w: int, L: int, limit_bits: int = 12) -> int:
    """Brute-force count of L-well-separated n-sets (tiny universes only)."""
    if w > limit_bits:
        raise ValueError(f"enumeration limited to w <= {limit_bits}")
    U = 1 << w
    candidates = range(2 * L - 1, U - 2 * L + 1)
    return sum(
        1 for c in itertools.combinations(candidates, n)
        if all(b - a >= 2 * L for a, b in zip(c, c[1:]))
    )


def lemma_floor(n: int, w: int, L: int) -> int:
    """``((U - 4nL) / n) ** n`` rounded down, the guaranteed number of such sets."""
    U = 1 << w
    if n == 0:
        return 1
    base = Fraction(U - 4 * n * L, n)
    return math.floor(base ** n) if base > 0 else 0


def lemma_floor_bits(n: int, w: int, L: int) -> float:
    U = 1 << w
    if n == 0 or U <= 4 * n * L:
        return 0.0
    return n * math.log2((U - 4 * n * L) / n)


# ------------------------------------------------------------------ intervals


def top_index(x: int, L: int) -> int:
    return x // L


def top_interval(j: int, L: int) -> Interval:
    return Interval(j * L, (j + 1) * L - 1)


def levels(L: int) -> range:
    """Covering levels, from the most significant unknown bit down to bit 1."""
    return range(L.bit_length() - 1, 0, -1)


def cover_bounds(x: int, i: int, L: int) -> tuple[tuple[int, int], tuple[int, int]]:
    """Endpoints of the level-``i`` covering pair of ``x`` (the left pair may dip below 0)."""
    if not is_pow2(L) or not 1 <= i <= L.bit_length() - 1:
        raise ValueError(f"level {i} outside 1..lg L for L={L}")
    c = (x >> i << i) + (1 << (i - 1))
    return (c - L, c - 1), (c, c + L - 1)


def cover_intervals(x: int, i: int, L: int) -> tuple[Interval, Interval]:
    """Level-``i`` covering pair of ``x``; ``x`` lies in the left one iff bit ``i`` (1-based) is 0."""
    left, right = cover_bounds(x, i, L)
    if left[0] < 0:
        raise ValueError(f"covering interval of {x} at level {i} starts below 0")
    return Interval(*left), Interval(*right)


def bit(x: int, i: int) -> int:
    """The ``i``-th least significant bit of ``x``, counting from 1."""
    return (x >> (i - 1)) & 1


# ------------------------------------------------------------------ subsets


def subset_rank(m: int, subset) -> int:
    """Colexicographic rank of a strictly increasing ``subset`` of ``range(m)``."""
    s = list(subset)
    if any(b <= a for a, b in zip(s, s[1:])) or (s and (s[0] < 0 or s[-1] >= m)):
        raise ValueError("subset must be strictly increasing and inside range(m)")
    return sum(comb(c, i + 1) for i, c in enumerate(s))


def subset_unrank(m: int, n: int, rank: int) -> list[int]:
    if not 0 <= n <= m or not 0 <= rank < comb(m, n):
        raise ValueError("rank outside [0, C(m, n))")
    out = []
    hi = m - 1
    for i in range(n, 0, -1):
        lo = i - 1
        # largest c in [lo, hi] with C(c, i) <= rank
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if comb(mid, i) <= rank:
                lo = mid
            else:
                hi = mid - 1
        out.append(lo)
        rank -= comb(lo, i)
        hi = lo - 1
    return out[::-1]


def subset_bits(m: int, n: int) -> int:
    """Fixed field width for a rank in ``[0, C(m, n))``."""
    return (comb(m, n) - 1).bit_length()


# ------------------------------------------------------------------ codec


@dataclass
class LbEncoding:
    filter_bytes: bytes
    n: int
    w: int
    L: int
    t_star: int
    rank: int
    ambiguity: list[int]
    A: int
    B: int

    @property
    def s_bits(self) -> int:
        return 8 * len(self.filter_bytes)

    @property
    def subset_bits(self) -> int:
        return subset_bits(self.t_star, self.n)

    @property
    def subset_bits_exact(self) -> float:
        return math.log2(comb(self.t_star, self.n))

    @property
    def total_bits(self) -> int:
        return self.s_bits + LB_HEADER_BITS + self.subset_bits + len(self.ambiguity)

    def to_bytes(self) -> bytes:
        acc = self.rank
        for b in self.ambiguity:
            acc = (acc << 1) | b
        nbits = self.subset_bits + len(self.ambiguity)
        tail = acc << (-nbits % 8)
        body = tail.to_bytes((nbits + 7) // 8, "big") if nbits else b""
        return self.filter_bytes + _LB_HEADER.pack(len(self.filter_bytes), self.t_star) + body

    @staticmethod
    def split(data: bytes) -> tuple[RangeFilter, "_Stream"]:
        """Parse the embedded filter and header; return the filter and the remaining bit stream."""
        try:
            f, cut = RangeFilter.read_prefix(data)
        except FilterFormatError as exc:
            raise DecodeError(f"embedded filter unreadable: {exc}") from exc
        if len(data) < cut + _LB_HEADER.size:
            raise DecodeError("encoding truncated inside the header")
        s_len, t_star = _LB_HEADER.unpack_from(data, cut)
        if s_len != cut:
            raise DecodeError("header filter length does not match the embedded filter")
        rest = data[cut + _LB_HEADER.size:]
        return f, _Stream(t_star, int.from_bytes(rest, "big"), 8 * len(rest))


@dataclass
class _Stream:
    t_star: int
    value: int
    nbits: int
    pos: int = 0

    def read(self, k: int) -> int:
        if self.pos + k > self.nbits:
            raise DecodeError("bit stream exhausted")
        shift = self.nbits - self.pos - k
        self.pos += k
        return (self.value >> shift) & ((1 << k) - 1)


def _query(f: RangeFilter, iv: Interval) -> bool:
    return f.query(iv)


MAX_TOP_INTERVALS = 1 << 26


def _top_answers(f: RangeFilter, chunk: int = 1 << 20) -> np.ndarray:
    """Indices of the top intervals the filter reports as non-empty."""
    p = f.params
    count = p.U // p.L
    if count > MAX_TOP_INTERVALS:
        raise ParamError(f"U/L = {count} top intervals is too many to scan (limit {MAX_TOP_INTERVALS})")
    found = []
    for lo in range(0, count, chunk):
        starts = np.arange(lo, min(lo + chunk, count), dtype=np.uint64) * np.uint64(p.L)
        hits, _ = f.query_many(starts, starts + np.uint64(p.L - 1))
        found.append(np.flatnonzero(hits) + lo)
    return np.concatenate(found) if found else np.zeros(0, np.int64)


def _encode_once(S: WellSepSet, epsilon, seed: int) -> LbEncoding:
    params = validate_params(S.w, S.L, epsilon, S.n, seed)
    f = RangeFilter.build(S.points, params)
    t_star = _top_answers(f)
    pos = {int(j): k for k, j in enumerate(t_star)}
    try:
        ts = [pos[top_index(x, S.L)] for x in S.points]
    except KeyError as exc:  # a one-sided filter cannot miss a stored point
        raise AssertionError("filter reported a stored point's top interval as empty") from exc
    amb: list[int] = []
    false_pos = 0
    for x in S.points:
        for i in levels(S.L):
            left, right = cover_intervals(x, i, S.L)
            ql, qr = _query(f, left), _query(f, right)
            truth_left = x in left
            false_pos += (ql and not truth_left) + (qr and truth_left)
            if ql and qr:
                amb.append(bit(x, i))
    return LbEncoding(
        filter_bytes=f.to_bytes(), n=S.n, w=S.w, L=S.L, t_star=len(t_star),
        rank=subset_rank(len(t_star), ts), ambiguity=amb,
        A=len(t_star) - S.n, B=false_pos,
    )


def encode(S: WellSepSet, epsilon, seed: int = 0, retries: int = 0) -> LbEncoding:
    """Encode ``S`` with a filter built from ``seed``.

    With ``retries > 0`` further seeds are tried until both false-positive
    counts fall under twice their expectations; the last attempt is kept
    otherwise.
    """
    eps = validate_params(S.w, S.L, epsilon, S.n, seed).epsilon
    a_cap = 2 * eps * S.U / S.L
    b_cap = 2 * eps * S.n * len(levels(S.L))
    enc = None
    for t in range(retries + 1):
        enc = _encode_once(S, eps, (seed + t) & ((1 << 64) - 1))
        if enc.A <= a_cap and enc.B <= b_cap:
            break
    return enc


def decode(data) -> WellSepSet:
    """Rebuild the set from an ``LbEncoding`` or its byte form."""
    if isinstance(data, LbEncoding):
        data = data.to_bytes()
    f, stream = LbEncoding.split(bytes(data))
    p = f.params
    try:
        t_star = _top_answers(f)
    except ParamError as exc:
        raise DecodeError(str(exc)) from exc
    if len(t_star) != stream.t_star:
        raise DecodeError(f"|T*| mismatch: header {stream.t_star}, replay {len(t_star)}")
    n = p.n
    if n > len(t_star):
        raise DecodeError("more points than positive top intervals")
    rank = stream.read(subset_bits(len(t_star), n))
    try:
        chosen = subset_unrank(len(t_star), n, rank)
    except ValueError as exc:
        raise DecodeError(str(exc)) from exc
    points = []
    for k in chosen:
        x = int(t_star[k]) * p.L
        for i in levels(p.L):
            left, right = cover_intervals(x | (1 << (i - 1)), i, p.L)
            ql, qr = _query(f, left), _query(f, right)
            if ql and qr:
                b = stream.read(1)
            elif ql or qr:
                b = 0 if ql else 1
            else:
                raise DecodeError("both covering intervals empty: filter and encoding disagree")
            x |= b << (i - 1)
        points.append(x)
    if stream.nbits - stream.pos >= 8:
        raise DecodeError("unconsumed bytes after the ambiguity bits")
    try:
        return WellSepSet(tuple(points), n, p.w, p.L)
    except ValueError as exc:
        raise DecodeError(f"decoded points are invalid: {exc}") from exc


# ------------------------------------------------------------------ reports


def lb_trial(n: int, w: int, L: int, epsilon, seed: int, retries: int = 0) -> dict:
    """One generate/encode/decode round with the length report used by ``lb-demo``."""
    S = gen_wellsep(n, w, L, seed)
    enc = encode(S, epsilon, seed, retries)
    ok = decode(enc.to_bytes()) == S
    return {
        "n": n,
        "w": w,
        "L": L,
        "epsilon": str(validate_params(w, L, epsilon, n).epsilon),
        "s_bits": enc.s_bits,
        "A": enc.A,
        "B": enc.B,
        "subset_bits": enc.subset_bits,
        "subset_bits_exact": round(enc.subset_bits_exact, 3),
        "total_bits": enc.total_bits,
        "lemma_floor_bits": round(lemma_floor_bits(n, w, L), 3),
        "roundtrip_ok": ok,
    }
