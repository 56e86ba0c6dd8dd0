import hashlib
import math
import struct
import zlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from approxrange.core import Interval, ParamError, PointSet, validate_params
from approxrange.filter import (
    BloomBaseline,
    FilterFormatError,
    IntervalTooLong,
    RangeFilter,
    bloom_query_range,
    deserialize,
    filter_build,
    measure_fpr,
    sample_empty_intervals,
    serialize,
)

from oracles import oracle_nonempty, random_intervals

GOLDEN = {
    # sha256 of the file for S = {i * 2^22 : i < 1000}, w=32, L=256, eps=1/100, seed 42
    "binary": (2292, "3679d54a8548795ea37cb3daa5f1cfbf833cd698b691900433df3f3c1daa0acb"),
    "zfast": (12412, "e327660ae980114e11991b23c2b9b52e82e1cc5e106d1da0c92e666ffe9dad45"),
}


def _random_filter(w=32, L=256, eps="1/100", n=1000, seed=42, kind="binary", point_seed=1):
    rng = np.random.default_rng(point_seed)
    pts = PointSet(np.unique(rng.integers(0, 2**w, n, dtype=np.uint64)).tolist()[:n], w)
    params = validate_params(w, L, eps, len(pts), seed)
    return RangeFilter.build(pts, params, kind), pts


@pytest.mark.parametrize("kind", ["binary", "zfast"])
def test_golden_digest(kind):
    params = validate_params(32, 256, "1/100", 1000, 42)
    data = serialize(filter_build([i << 22 for i in range(1000)], params, kind))
    size, digest = GOLDEN[kind]
    assert len(data) == size
    assert hashlib.sha256(data).hexdigest() == digest


def test_build_is_deterministic():
    a, _ = _random_filter()
    b, _ = _random_filter()
    assert a.to_bytes() == b.to_bytes()
    c, _ = _random_filter(seed=43)
    assert c.to_bytes() != a.to_bytes()


def test_empty_filter_answers_empty():
    f = RangeFilter.build([], validate_params(20, 16, "1/10", 0))
    assert f.stored == 0
    assert not f.query(Interval(0, 15))
    assert not any(f.query(Interval(a, a + 15)) for a in range(0, 1 << 20, 4099))


def test_one_block_keeps_all_points():
    params = validate_params(32, 256, "1/100", 1000, 3)
    base = 7 * params.r
    pts = sorted(base + x for x in np.random.default_rng(0).choice(params.r, 1000, replace=False).tolist())
    assert RangeFilter.build(pts, params).stored == 1000


def test_build_errors():
    params = validate_params(16, 16, "1/10", 3)
    with pytest.raises(ParamError):
        RangeFilter.build([1, 2], params)
    with pytest.raises(ValueError):
        RangeFilter.build([1, 2, 1 << 16], params)


@pytest.mark.parametrize("kind", ["binary", "zfast"])
@given(data=st.data())
def test_no_false_negatives(kind, data):
    w = data.draw(st.integers(4, 64))
    lgL = data.draw(st.integers(0, min(w - 1, 12)))
    L = 1 << lgL
    pts = sorted(data.draw(st.sets(st.integers(0, 2**w - 1), min_size=1, max_size=40)))
    eps = data.draw(st.sampled_from(["1/2", "1/10", "1/1000"]))
    f = RangeFilter.build(pts, validate_params(w, L, eps, len(pts), data.draw(st.integers(0, 2**64 - 1))), kind)
    for x in pts:
        off = data.draw(st.integers(0, L - 1))
        length = data.draw(st.integers(off + 1, L))
        a = max(0, x - off)
        b = min(2**w - 1, a + length - 1)
        if b < x:
            a, b = x, min(2**w - 1, x + length - 1)
        hit, probes = f.probe(Interval(a, b))
        assert hit and 1 <= probes <= 4


def test_zero_false_negatives_exhaustive_small():
    w, L = 12, 8
    for seed in range(5):
        rng = np.random.default_rng(seed)
        pts = np.sort(rng.choice(1 << w, 40, replace=False)).astype(np.uint64)
        f = RangeFilter.build(pts.tolist(), validate_params(w, L, "1/4", 40, seed))
        for length in range(1, L + 1):
            a = np.arange(0, (1 << w) - length + 1, dtype=np.uint64)
            b = a + np.uint64(length - 1)
            got, probes = f.query_many(a, b)
            assert np.all(got[oracle_nonempty(pts, a, b)])
            assert probes.max() <= 4


def test_false_positives_are_collisions():
    f, pts = _random_filter(w=24, L=64, eps="1/4", n=300, seed=5)
    hs = set(f.lh.many(pts.pts).tolist())
    a, b = sample_empty_intervals(pts, 24, 64, 20000, 9)
    got, _ = f.query_many(a, b)
    assert got.sum() > 0
    for t in np.flatnonzero(got):
        image = f.lh.image(Interval(int(a[t]), int(b[t])))
        assert any(p.a <= h <= p.b for h in hs for p in image)


def test_rejects_long_interval():
    f, _ = _random_filter()
    with pytest.raises(IntervalTooLong):
        f.query(Interval(0, 256))
    with pytest.raises(IntervalTooLong):
        f.query_many(np.array([0], np.uint64), np.array([300], np.uint64))
    with pytest.raises(ValueError):
        f.query(Interval(2**32 - 1, 2**32))


@pytest.mark.parametrize("kind", ["binary", "zfast"])
def test_serialization_round_trip(kind):
    f, pts = _random_filter(kind=kind)
    g = deserialize(serialize(f))
    rng = np.random.default_rng(4)
    a, b = random_intervals(rng, 32, 10_000, pts.pts)
    b = np.minimum(b, a + np.uint64(255))
    assert np.array_equal(f.query_many(a, b)[0], g.query_many(a, b)[0])
    assert g.to_bytes() == f.to_bytes()


def test_header_layout():
    f, _ = _random_filter(kind="zfast")
    data = f.to_bytes()
    magic, version, w, flags, reserved, n, L, num, den, r, seed, B, m = struct.unpack_from("<4sBBBB8Q", data)
    assert (magic, version, w, reserved) == (b"ARE1", 1, 32, 0)
    assert flags == 0b10  # zfast index, not exact
    assert (n, L, num, den, r, seed) == (1000, 256, 1, 100, 2**25, 42)
    assert (B, m) == (f.exact.B, f.stored)
    assert struct.unpack("<I", data[-4:])[0] == zlib.crc32(data[:-4])


def test_exact_flag():
    params = validate_params(16, 16, "1/2", 2048)
    pts = list(range(0, 2**16, 32))
    data = RangeFilter.build(pts, params).to_bytes()
    assert data[6] & 1


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda d: b"XRE1" + d[4:], "magic"),
        (lambda d: d[:4] + b"\x02" + d[5:], "version"),
        (lambda d: d[:-10], "truncated|checksum"),
        (lambda d: d[:40], "truncated|exceed"),
        (lambda d: d[:-8] + bytes([d[-8] ^ 1]) + d[-7:], "checksum"),
        (lambda d: d + b"\x00", "trailing|checksum"),
        (lambda d: b"", "truncated"),
    ],
)
def test_corruption_detected(mutate, message):
    f, _ = _random_filter(kind="zfast")
    with pytest.raises(FilterFormatError, match=message):
        deserialize(mutate(f.to_bytes()))


def test_every_truncation_is_an_error():
    f, _ = _random_filter(n=50, kind="zfast")
    data = f.to_bytes()
    for cut in range(len(data)):
        with pytest.raises(FilterFormatError):
            deserialize(data[:cut])


def test_every_bit_flip_is_an_error():
    f, _ = _random_filter(n=50, kind="zfast")
    data = f.to_bytes()
    for i in range(len(data)):
        for bitpos in (0, 7):
            bad = data[:i] + bytes([data[i] ^ (1 << bitpos)]) + data[i + 1:]
            with pytest.raises(FilterFormatError):
                deserialize(bad)


def test_space_report_accounting():
    for kind in ("binary", "zfast"):
        f, _ = _random_filter(kind=kind)
        rep = f.space_report()
        assert sum(rep.breakdown.values()) == rep.total_bits == 8 * len(f.to_bytes())
        assert rep.offset_width == f.params.r_bits - f.exact.B_bits
        assert rep.bound_bits == pytest.approx(1000 * math.log2(256 / 0.01))


def test_measure_fpr_exact_mode_is_zero():
    params = validate_params(16, 16, "1/2", 2048, 1)
    rng = np.random.default_rng(2)
    pts = PointSet(np.sort(rng.choice(2**16, 2048, replace=False)).tolist(), 16)
    f = RangeFilter.build(pts, params)
    rep = measure_fpr(f, pts, 16, 20000, 3)
    assert f.params.exact and rep.false_positives == 0 and rep.rate == 0.0


def test_measure_fpr_is_deterministic_and_consistent():
    f, pts = _random_filter(w=24, L=64, eps="1/8", n=200)
    r1 = measure_fpr(f, pts, 64, 5000, 11)
    r2 = measure_fpr(f, pts, 64, 5000, 11)
    assert r1 == r2
    assert r1.rate == r1.false_positives / r1.trials
    assert r1.probes_max <= 4
    a, b = sample_empty_intervals(pts, 24, 64, 100, 11)
    assert not oracle_nonempty(pts.pts, a, b).any()
    assert np.all(b - a == 63)


def test_measure_fpr_gives_up_on_dense_sets():
    pts = PointSet(range(0, 256, 2), 8)
    f = RangeFilter.build(pts, validate_params(8, 4, "1/2", 128))
    with pytest.raises(RuntimeError):
        measure_fpr(f, pts, 4, 10, 0)


def test_concurrent_queries_agree():
    f, pts = _random_filter()
    a, b = random_intervals(np.random.default_rng(8), 32, 4000, pts.pts)
    b = np.minimum(b, a + np.uint64(255))
    expected = [f.query(Interval(int(x), int(y))) for x, y in zip(a, b)]
    with ThreadPoolExecutor(4) as pool:
        got = list(pool.map(lambda t: f.query(Interval(int(a[t]), int(b[t]))), range(len(a))))
    assert got == expected


# ------------------------------------------------------------------ baseline


def test_bloom_one_sided_and_probe_count():
    f, pts = _random_filter(n=500)
    bb = BloomBaseline(pts, f.params)
    for x in list(pts)[:200]:
        assert bb.contains(x)
        a = max(0, x - 10)
        hit, probes = bb.probe(Interval(a, a + 99))
        assert hit and probes == 100
        assert bloom_query_range(bb, Interval(x, x))
    with pytest.raises(IntervalTooLong):
        bb.probe(Interval(0, 256))


def test_bloom_sizing():
    f, pts = _random_filter()
    bb = BloomBaseline(pts, f.params)
    assert bb.m == math.ceil(1000 * math.log(257 / 0.01) / math.log(2) ** 2)
    assert bb.k == max(1, round(bb.m / 1000 * math.log(2)))


def test_bloom_fpr_matches_its_fill():
    f, pts = _random_filter()
    bb = BloomBaseline(pts, f.params)
    fill = int(np.bitwise_count(bb.bits).sum()) / bb.m
    predicted = 1 - (1 - fill**bb.k) ** 256
    rep = measure_fpr(bb, pts, 256, 200_000, 1)
    se = math.sqrt(predicted * (1 - predicted) / rep.trials)
    assert abs(rep.rate - predicted) <= 3 * se
    assert rep.probes_mean == 256


@pytest.mark.xfail(reason="standard sizing targets exactly eps, so the realized rate sits on the bound", strict=False)
def test_bloom_fpr_at_most_epsilon():
    f, pts = _random_filter()
    rep = measure_fpr(BloomBaseline(pts, f.params), pts, 256, 200_000, 1)
    assert rep.rate <= 0.01
