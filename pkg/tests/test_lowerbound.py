import itertools
from math import comb

import pytest
from hypothesis import given
from hypothesis import strategies as st

from approxrange.core import Interval, ParamError
from approxrange.lowerbound import (
    DecodeError,
    LbEncoding,
    WellSepSet,
    bit,
    count_wellsep_sets,
    cover_bounds,
    cover_intervals,
    decode,
    encode,
    gen_wellsep,
    is_valid_wellsep,
    lb_trial,
    lemma_floor,
    levels,
    subset_bits,
    subset_rank,
    subset_unrank,
    top_index,
    top_interval,
)


def test_top_interval_examples():
    assert top_index(21, 8) == 2
    assert top_interval(2, 8) == Interval(16, 23)
    assert top_interval(0, 8) == Interval(0, 7)
    assert top_index(2**10 - 1, 8) == 2**10 // 8 - 1


@given(st.integers(0, 2**20 - 1), st.integers(0, 10))
def test_top_interval_inverse(x, lgL):
    L = 1 << lgL
    j = top_index(x, L)
    assert x in top_interval(j, L)
    assert top_index(top_interval(j, L).a, L) == j


def test_cover_examples():
    left, right = cover_intervals(21, 2, 8)
    assert (left, right) == (Interval(14, 21), Interval(22, 29))
    assert bit(21, 2) == 0 and 21 in left
    left, right = cover_intervals(21, 1, 8)
    assert (left, right) == (Interval(13, 20), Interval(21, 28))
    assert bit(21, 1) == 1 and 21 in right


@given(st.integers(0, 2**20), st.integers(1, 12).flatmap(lambda lg: st.tuples(st.just(lg), st.integers(1, lg))))
def test_cover_widths_and_side(x, args):
    lgL, i = args
    L = 1 << lgL
    (la, lb), (ra, rb) = cover_bounds(x, i, L)
    assert lb - la + 1 == L and rb - ra + 1 == L and ra == lb + 1
    assert (la <= x <= lb) == (bit(x, i) == 0)
    assert (ra <= x <= rb) == (bit(x, i) == 1)


def test_cover_level_range():
    with pytest.raises(ValueError):
        cover_bounds(21, 0, 8)
    with pytest.raises(ValueError):
        cover_bounds(21, 4, 8)
    with pytest.raises(ValueError):
        cover_intervals(1, 3, 8)
    assert list(levels(64)) == [6, 5, 4, 3, 2, 1]


def test_subset_rank_examples():
    assert subset_rank(10, [0, 1, 2]) == 0
    assert subset_rank(5, [1, 3]) == 4
    # colex order enumerated independently: sort by the reversed tuple
    order = sorted(itertools.combinations(range(5), 2), key=lambda c: c[::-1])
    assert order.index((1, 3)) == 4
    assert [subset_rank(5, c) for c in order] == list(range(10))


def test_subset_unrank_exhaustive():
    for m in range(0, 7):
        for n in range(0, m + 1):
            subsets = list(itertools.combinations(range(m), n))
            ranks = sorted(subset_rank(m, c) for c in subsets)
            assert ranks == list(range(comb(m, n)))
            for c in subsets:
                assert tuple(subset_unrank(m, n, subset_rank(m, c))) == c


@given(st.integers(1, 400).flatmap(lambda m: st.tuples(st.just(m), st.sets(st.integers(0, m - 1)))))
def test_subset_codec_round_trip(args):
    m, s = args
    c = sorted(s)
    r = subset_rank(m, c)
    assert 0 <= r < comb(m, len(c))
    assert r.bit_length() <= subset_bits(m, len(c))
    assert subset_unrank(m, len(c), r) == c


def test_subset_errors():
    with pytest.raises(ValueError):
        subset_rank(5, [3, 1])
    with pytest.raises(ValueError):
        subset_rank(5, [5])
    with pytest.raises(ValueError):
        subset_unrank(5, 2, 10)


def test_wellsep_generation():
    for seed in range(30):
        s = gen_wellsep(32, 20, 64, seed)
        assert len(s.points) == 32 and is_valid_wellsep(s.points, 20, 64)
    one = gen_wellsep(1, 10, 8, 3)
    assert 15 <= one.points[0] <= 1024 - 16
    assert gen_wellsep(5, 16, 8, 7) == gen_wellsep(5, 16, 8, 7)


def test_wellsep_errors():
    with pytest.raises(ParamError):
        gen_wellsep(10, 8, 8, 0)
    with pytest.raises(ParamError):
        gen_wellsep(1, 8, 3, 0)
    with pytest.raises(RuntimeError):
        gen_wellsep(20, 10, 8, 0, max_tries=5)
    with pytest.raises(ValueError):
        WellSepSet((10, 12), 2, 8, 4)


def test_lemma_floor_by_enumeration():
    assert lemma_floor(2, 6, 2) == 576
    brute = sum(
        1 for c in itertools.combinations(range(64), 2) if is_valid_wellsep(c, 6, 2)
    )
    assert count_wellsep_sets(2, 6, 2) == brute >= 576


@pytest.mark.parametrize("n,w,L,eps", [(1, 10, 8, "1/4"), (8, 16, 16, "1/8"), (32, 20, 64, "1/64"), (4, 30, 2**10, "1/2")])
def test_round_trip(n, w, L, eps):
    for seed in range(5):
        s = gen_wellsep(n, w, L, seed)
        enc = encode(s, eps, seed)
        data = enc.to_bytes()
        assert decode(data) == s
        assert decode(enc) == s
        assert len(enc.ambiguity) == enc.B
        assert enc.total_bits == enc.s_bits + 128 + subset_bits(enc.t_star, n) + enc.B
        assert 8 * len(data) - enc.total_bits < 8


def test_huge_universes_are_rejected():
    s = gen_wellsep(4, 64, 2**20, 0)
    with pytest.raises(ParamError):
        encode(s, "1/2")


def test_ambiguity_bits_are_charged_to_false_positives():
    # with a coarse filter there are many false positives to charge
    for seed in range(5):
        s = gen_wellsep(16, 16, 16, seed)
        enc = encode(s, "1/2", seed)
        assert enc.B == len(enc.ambiguity) > 0
        assert decode(enc.to_bytes()) == s


def test_tampering_is_detected_or_changes_the_set():
    s = gen_wellsep(16, 16, 16, 1)
    enc = encode(s, "1/2", 1)
    assert enc.ambiguity
    for k in range(len(enc.ambiguity)):
        amb = list(enc.ambiguity)
        amb[k] ^= 1
        bad = LbEncoding(**{**enc.__dict__, "ambiguity": amb})
        try:
            assert decode(bad.to_bytes()) != s
        except DecodeError:
            pass


def test_decode_errors():
    s = gen_wellsep(8, 16, 16, 2)
    data = encode(s, "1/8", 2).to_bytes()
    with pytest.raises(DecodeError):
        decode(data[:50])
    with pytest.raises(DecodeError):
        decode(data[: len(data) - 20])
    with pytest.raises(DecodeError):
        decode(data + bytes(4))


def test_retries_keep_round_trip():
    s = gen_wellsep(16, 16, 16, 4)
    enc = encode(s, "1/2", 4, retries=16)
    assert decode(enc) == s


def test_trial_report_fields():
    row = lb_trial(8, 16, 16, "1/8", 5)
    assert set(row) >= {"n", "w", "L", "epsilon", "s_bits", "A", "B", "subset_bits", "total_bits",
                        "lemma_floor_bits", "roundtrip_ok"}
    assert row["roundtrip_ok"] is True


@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_intervals_hold_at_most_one_point(seed, lgL):
    L = 1 << lgL
    s = gen_wellsep(8, 14, L, seed)
    pts = s.points
    for x in pts:
        j = top_index(x, L)
        assert sum(1 for y in pts if y in top_interval(j, L)) == 1
        for i in levels(L):
            left, right = cover_intervals(x, i, L)
            assert sum(1 for y in pts if y in left) + sum(1 for y in pts if y in right) == 1
