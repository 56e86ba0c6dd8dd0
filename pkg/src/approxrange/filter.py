"""Approximate range emptiness filter, Bloom baseline, file format and harnesses."""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numba as nb
import numpy as np

from ._jit import kernel
from .core import Interval, ParamError, Params, PointSet, validate_params
from .hashing import GOLDEN, LocalityHash, TabulationHash, image_kernel, splitmix64, tab_eval
from .rangestruct import _NODE_DTYPE, BucketedRangeStructure, IndexKind, find
from .succinct import BitVector

MAGIC = b"ARE1"
VERSION = 1
FLAG_EXACT = 0x01
FLAG_ZFAST = 0x02
_HEADER = struct.Struct("<4sBBBB8Q")
HEADER_BITS = 8 * (_HEADER.size + 4)  # fixed header plus trailing CRC32


class IntervalTooLong(ValueError):
    """The query interval is longer than the filter's ``max_len``."""


class FilterFormatError(ValueError):
    """Malformed, truncated or corrupted filter bytes."""


# ------------------------------------------------------------------ kernels


@kernel
def filter_probe(tables, rbits, mask, rs, a, b, buf):
    """(non-empty?, exact-structure interval probes) for ``[a, b]``."""
    k = image_kernel(tables, rbits, mask, a, b, buf)
    for t in range(k):
        if find(rs, buf[t, 0], buf[t, 1])[0] >= 0:
            return True, t + 1
    return False, k


@kernel
def filter_many(tables, rbits, mask, rs, a, b, out, probes, buf):
    for t in range(a.shape[0]):
        hit, p = filter_probe(tables, rbits, mask, rs, a[t], b[t], buf)
        out[t] = hit
        probes[t] = p


@kernel
def bloom_contains(bits, m, tables, x):
    for i in range(tables.shape[0]):
        g = tab_eval(tables[i], x) % m
        if (bits[g >> np.uint64(6)] >> (g & np.uint64(63))) & np.uint64(1) == np.uint64(0):
            return False
    return True


@kernel
def bloom_probe(bits, m, tables, a, b):
    """OR of one membership probe per point of ``[a, b]``; every point is probed."""
    hit = False
    x = a
    while True:
        if bloom_contains(bits, m, tables, x):
            hit = True
        if x == b:
            break
        x += np.uint64(1)
    return hit, np.int64(b - a) + 1


@kernel
def bloom_many(bits, m, tables, a, b, out, probes):
    for t in range(a.shape[0]):
        hit, p = bloom_probe(bits, m, tables, a[t], b[t])
        out[t] = hit
        probes[t] = p


@kernel
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@kernel
def _has_point(pts, a, b):
    lo, hi = 0, pts.shape[0]
    while lo < hi:
        mid = (lo + hi) >> 1
        if pts[mid] < a:
            lo = mid + 1
        else:
            hi = mid
    return lo < pts.shape[0] and pts[lo] <= b


@kernel
def _sample_empty(pts, umax, length, seed, out_a, max_tries):
    # uniform start in [0, U - length]; trial t draws from its own stream
    span = umax - np.uint64(length) + np.uint64(2)  # wraps to 0 when it equals 2^64
    for t in range(out_a.shape[0]):
        state = _mix64(seed ^ _mix64(np.uint64(t) + np.uint64(GOLDEN)))
        ok = False
        for _ in range(max_tries):
            state += np.uint64(GOLDEN)
            draw = _mix64(state)
            start = draw if span == np.uint64(0) else draw % span
            if not _has_point(pts, start, start + np.uint64(length - 1)):
                ok = True
                break
        if not ok:
            return t
        out_a[t] = start
    return -1


def sample_empty_intervals(points, w: int, length: int, trials: int, seed: int,
                           max_tries: int = 1000) -> tuple[np.ndarray, np.ndarray]:
    """Uniformly random length-``length`` intervals of ``[2**w]`` missing every point."""
    pts = np.ascontiguousarray(points.pts if isinstance(points, PointSet) else points, dtype=np.uint64)
    if not 1 <= length <= 1 << w:
        raise ValueError(f"interval length {length} outside 1..2^{w}")
    a = np.zeros(trials, dtype=np.uint64)
    failed = _sample_empty(pts, np.uint64((1 << w) - 1), length, np.uint64(seed), a, max_tries)
    if failed >= 0:
        raise RuntimeError(f"no empty interval of length {length} found after {max_tries} tries (trial {failed})")
    return a, a + np.uint64(length - 1)


# ------------------------------------------------------------------ reports


@dataclass
class FprReport:
    structure: str
    trials: int
    false_positives: int
    rate: float
    epsilon: float
    length: int
    max_len: int
    expected: float
    stderr: float
    probes_mean: float
    probes_max: int

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class SpaceReport:
    total_bits: int
    breakdown: dict = field(default_factory=dict)
    bound_bits: float = 0.0
    ratio: float = math.inf
    ratio_excl_header: float = math.inf
    offset_width: int = 0
    buckets: int = 0
    stored_points: int = 0
    directory_bits: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


# ------------------------------------------------------------------ filter


class RangeFilter:
    """One-sided approximate range emptiness for intervals of length at most ``L``.

    Points are mapped to ``[r]`` by a locality-preserving hash and the image is
    kept in an exact bucketed range structure; a query looks up the (at most
    four) linear pieces of the interval's image.
    """

    def __init__(self, params: Params, lh: LocalityHash, exact: BucketedRangeStructure):
        self.params = params
        self.lh = lh
        self.exact = exact
        self._args = (lh.u.tables, np.int64(lh.rbits), lh.mask, exact.arrays)

    @classmethod
    def build(cls, points, params: Params, index_kind="binary") -> "RangeFilter":
        if not isinstance(points, PointSet):
            points = PointSet(points, params.w)
        if len(points) != params.n:
            raise ParamError(f"expected {params.n} points, got {len(points)}")
        if len(points) and int(points.pts[-1]) >= params.U:
            raise ValueError("point outside universe")
        lh = LocalityHash(params)
        image = np.unique(lh.many(points.pts)) if len(points) else np.zeros(0, np.uint64)
        return cls(params, lh, BucketedRangeStructure(image, params.r_bits, index_kind))

    @property
    def stored(self) -> int:
        """Number of distinct hashed points (``|h(S)|``)."""
        return self.exact.n

    def _check(self, interval: Interval):
        if interval.b >= self.params.U:
            raise ValueError(f"interval [{interval.a}, {interval.b}] outside universe 2^{self.params.w}")
        if interval.length > self.params.L:
            raise IntervalTooLong(f"interval length {interval.length} exceeds max_len {self.params.L}")

    def probe(self, interval: Interval) -> tuple[bool, int]:
        self._check(interval)
        buf = np.zeros((4, 2), dtype=np.uint64)
        hit, p = filter_probe(*self._args, np.uint64(interval.a), np.uint64(interval.b), buf)
        return bool(hit), int(p)

    def query(self, interval: Interval) -> bool:
        """True for "non-empty"; never False when the interval holds a point."""
        return self.probe(interval)[0]

    def query_many(self, a, b) -> tuple[np.ndarray, np.ndarray]:
        a = np.ascontiguousarray(a, dtype=np.uint64)
        b = np.ascontiguousarray(b, dtype=np.uint64)
        if len(a) and (np.any(b < a) or int((b - a).max()) >= self.params.L):
            raise IntervalTooLong(f"some interval exceeds max_len {self.params.L}")
        if len(a) and self.params.w < 64 and int(b.max()) >= self.params.U:
            raise ValueError("interval outside universe")
        out = np.zeros(len(a), dtype=np.bool_)
        probes = np.zeros(len(a), dtype=np.int64)
        filter_many(*self._args, a, b, out, probes, np.zeros((4, 2), dtype=np.uint64))
        return out, probes

    def expected_fpr(self, length: int) -> float:
        if self.params.exact:
            return 0.0
        return min(1.0, self.params.n * length / self.params.r)

    # -- serialization

    def to_bytes(self) -> bytes:
        p, ex = self.params, self.exact
        flags = (FLAG_EXACT if p.exact else 0) | (FLAG_ZFAST if ex.kind is IndexKind.ZFAST else 0)
        parts = [
            _HEADER.pack(MAGIC, VERSION, p.w, flags, 0, p.n, p.L, p.epsilon.numerator,
                         p.epsilon.denominator, p.r, p.seed, ex.B, ex.n),
            ex.d1.payload_words().astype("<u8").tobytes(),
            ex.d2.payload_words().astype("<u8").tobytes(),
            ex.offset_words().astype("<u8").tobytes(),
        ]
        if ex.kind is IndexKind.ZFAST:
            for nodes in ex.nodes:
                blob = nodes.astype(_NODE_DTYPE).tobytes()
                parts.append(struct.pack("<I", len(blob)) + blob)
        body = b"".join(parts)
        return body + struct.pack("<I", zlib.crc32(body))

    @classmethod
    def from_bytes(cls, data: bytes) -> "RangeFilter":
        data = bytes(data)
        f, end = cls.read_prefix(data)
        if end != len(data):
            raise FilterFormatError(f"{len(data) - end} unexpected trailing bytes")
        return f

    @classmethod
    def read_prefix(cls, data: bytes) -> tuple["RangeFilter", int]:
        """Parse one filter from the start of ``data``; return it and the bytes consumed."""
        data = bytes(data)
        if len(data) < _HEADER.size + 4:
            raise FilterFormatError("truncated filter: shorter than the fixed header")
        magic, version, w, flags, _, n, L, num, den, r, seed, B, m = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise FilterFormatError(f"bad magic {magic!r}")
        if version != VERSION:
            raise FilterFormatError(f"unsupported version {version}")
        pos = _HEADER.size

        def take(size: int) -> int:
            nonlocal pos
            if pos + size > len(data):
                raise FilterFormatError("truncated filter payload")
            pos += size
            return pos - size

        def words(count: int) -> np.ndarray:
            at = take(8 * count)
            return np.frombuffer(data, dtype="<u8", count=count, offset=at).astype(np.uint64)

        # walk the layout with bounds checks, then verify the checksum, then validate
        if not 0 < B <= 8 * len(data) or m > 8 * len(data):
            raise FilterFormatError("header sizes exceed the available bytes")
        d1_words = words((B + 63) // 64)
        d1_ones = int(np.bitwise_count(d1_words).sum())
        d2_len = d1_ones + m
        d2_words = words((d2_len + 63) // 64)
        r_bits = r.bit_length() - 1
        B_bits = B.bit_length() - 1
        k = r_bits - B_bits
        if k < 0:
            raise FilterFormatError("bucket count exceeds the reduced universe")
        off = words((m * k + 63) // 64)
        blobs = []
        if flags & FLAG_ZFAST:
            for _ in range(d1_ones):
                (size,) = struct.unpack_from("<I", data, take(4))
                if size % _NODE_DTYPE.itemsize:
                    raise FilterFormatError("bad index blob length")
                blobs.append(np.frombuffer(data, dtype=_NODE_DTYPE, count=size // _NODE_DTYPE.itemsize,
                                           offset=take(size)).copy())
        (crc,) = struct.unpack_from("<I", data, take(4))
        if zlib.crc32(data[: pos - 4]) != crc:
            raise FilterFormatError("checksum mismatch (corrupt or truncated filter)")

        try:
            params = validate_params(w, L, Fraction(num, den), n, seed)
        except (ParamError, ZeroDivisionError) as exc:
            raise FilterFormatError(f"invalid parameters in header: {exc}") from exc
        if params.r != r or bool(flags & FLAG_EXACT) != params.exact:
            raise FilterFormatError("header r / exact flag inconsistent with parameters")
        if B != 1 << min(max(m - 1, 0).bit_length(), r_bits) or m > n:
            raise FilterFormatError("header bucket count inconsistent with stored points")
        try:
            d1 = BitVector.from_words(d1_words, B)
            d2 = BitVector.from_words(d2_words, d2_len)
        except ValueError as exc:
            raise FilterFormatError(str(exc)) from exc
        if d1.popcount != d1_ones or d2.popcount != d1_ones:
            raise FilterFormatError("D1/D2 disagree on the number of non-empty buckets")
        kind = IndexKind.ZFAST if flags & FLAG_ZFAST else IndexKind.BINARY
        exact = BucketedRangeStructure.from_parts(r_bits, m, B_bits, kind, d1, d2, off, blobs)
        return cls(params, LocalityHash(params), exact), pos

    # -- accounting

    def space_report(self) -> SpaceReport:
        ex = self.exact
        parts = ex.space()
        breakdown = {
            "header": HEADER_BITS,
            "d1": parts["d1"],
            "d2": parts["d2"],
            "offsets": parts["offsets"],
            "index": parts["index"],
        }
        total = sum(breakdown.values())
        p = self.params
        bound = p.n * math.log2(p.L / p.epsilon) if p.n else 0.0
        return SpaceReport(
            total_bits=total,
            breakdown=breakdown,
            bound_bits=bound,
            ratio=total / bound if bound else math.inf,
            ratio_excl_header=(total - HEADER_BITS) / bound if bound else math.inf,
            offset_width=ex.k,
            buckets=ex.B,
            stored_points=ex.n,
            directory_bits=parts["directories"],
        )

    def __repr__(self) -> str:
        p = self.params
        return f"RangeFilter(n={p.n}, w={p.w}, L={p.L}, eps={p.epsilon}, r=2^{p.r_bits}, stored={self.stored})"


def filter_build(points, params: Params, index_kind="binary") -> RangeFilter:
    return RangeFilter.build(points, params, index_kind)


def serialize(f: RangeFilter) -> bytes:
    return f.to_bytes()


def deserialize(data: bytes) -> RangeFilter:
    return RangeFilter.from_bytes(data)


# ------------------------------------------------------------------ baseline


class BloomBaseline:
    """Bloom filter at point rate ``eps/(L+1)``, queried once per point of the interval."""

    def __init__(self, points, params: Params):
        if not isinstance(points, PointSet):
            points = PointSet(points, params.w)
        self.params = params
        n = len(points)
        eps = float(params.epsilon)
        if n:
            self.m = math.ceil(n * math.log((params.L + 1) / eps) / math.log(2) ** 2)
            self.k = max(1, round(self.m / n * math.log(2)))
        else:
            self.m, self.k = 64, 1
        # k independent tabulation functions; the filter's own hash uses the
        # stream at ``seed``, these use streams at derived seeds
        self.tables = np.stack([TabulationHash(s, 1 << 64).tables for s in _derived_seeds(params.seed, self.k)])
        self.bits = np.zeros((self.m + 63) // 64, dtype=np.uint64)
        _bloom_insert(self.bits, np.uint64(self.m), self.tables, points.pts)

    def _args(self):
        return self.bits, np.uint64(self.m), self.tables

    def contains(self, x: int) -> bool:
        return bool(bloom_contains(*self._args(), np.uint64(x)))

    def probe(self, interval: Interval) -> tuple[bool, int]:
        if interval.length > self.params.L:
            raise IntervalTooLong(f"interval length {interval.length} exceeds max_len {self.params.L}")
        hit, p = bloom_probe(*self._args(), np.uint64(interval.a), np.uint64(interval.b))
        return bool(hit), int(p)

    def query(self, interval: Interval) -> bool:
        return self.probe(interval)[0]

    def query_many(self, a, b) -> tuple[np.ndarray, np.ndarray]:
        a = np.ascontiguousarray(a, dtype=np.uint64)
        b = np.ascontiguousarray(b, dtype=np.uint64)
        if len(a) and int((b - a).max()) >= self.params.L:
            raise IntervalTooLong(f"some interval exceeds max_len {self.params.L}")
        out = np.zeros(len(a), dtype=np.bool_)
        probes = np.zeros(len(a), dtype=np.int64)
        bloom_many(*self._args(), a, b, out, probes)
        return out, probes

    def point_fpr(self) -> float:
        n = self.params.n
        return (1 - math.exp(-self.k * n / self.m)) ** self.k

    def expected_fpr(self, length: int) -> float:
        return 1 - (1 - self.point_fpr()) ** length

    @property
    def size_bits(self) -> int:
        return self.m


def _derived_seeds(seed: int, count: int) -> list[int]:
    out = []
    state = seed ^ 0xB10F
    for _ in range(count):
        state, s = splitmix64(state)
        out.append(s)
    return out


@kernel
def _bloom_insert(bits, m, tables, pts):
    for x in pts:
        for i in range(tables.shape[0]):
            g = tab_eval(tables[i], x) % m
            bits[g >> np.uint64(6)] |= np.uint64(1) << (g & np.uint64(63))


def bloom_query_range(bb: BloomBaseline, interval: Interval) -> bool:
    return bb.query(interval)


# ------------------------------------------------------------------ harness


def measure_fpr(structure, points, length: int, trials: int, seed: int, name: str | None = None) -> FprReport:
    """False-positive rate of ``structure`` on random empty intervals of ``length``."""
    p = structure.params
    if length > p.L:
        raise IntervalTooLong(f"length {length} exceeds max_len {p.L}")
    a, b = sample_empty_intervals(points, p.w, length, trials, seed)
    hits, probes = structure.query_many(a, b)
    fp = int(hits.sum())
    rate = fp / trials if trials else 0.0
    expected = structure.expected_fpr(length)
    return FprReport(
        structure=name or type(structure).__name__,
        trials=trials,
        false_positives=fp,
        rate=rate,
        epsilon=float(p.epsilon),
        length=length,
        max_len=p.L,
        expected=expected,
        stderr=math.sqrt(expected * (1 - expected) / trials) if trials else 0.0,
        probes_mean=float(probes.mean()) if trials else 0.0,
        probes_max=int(probes.max()) if trials else 0,
    )
