"""Shared domain types, parameter validation and word-level bit helpers."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

import numpy as np

MAX_U64 = (1 << 64) - 1


class ParamError(ValueError):
    """Raised for an invalid problem configuration."""


def msb(x: int) -> Optional[int]:
    """Index of the highest set bit of ``x`` (0 = least significant), ``None`` for 0."""
    if x < 0:
        raise ValueError("msb of a negative value")
    if x == 0:
        return None
    return x.bit_length() - 1


@dataclass(frozen=True)
class Prefix:
    """A bit prefix of ``length`` bits whose value is right-aligned in ``value``."""

    length: int
    value: int

    def bits(self) -> str:
        return format(self.value, f"0{self.length}b") if self.length else ""


def lcp(a: int, b: int, w: int) -> Prefix:
    """Longest common prefix of the ``w``-bit big-endian forms of ``a`` and ``b``."""
    if not (0 <= a < (1 << w) and 0 <= b < (1 << w)):
        raise ValueError(f"operands must fit in {w} bits")
    if a == b:
        return Prefix(w, a)
    length = w - 1 - msb(a ^ b)
    return Prefix(length, a >> (w - length))


def is_pow2(x: int) -> bool:
    return x > 0 and x & (x - 1) == 0


def as_fraction(epsilon) -> Fraction:
    """Exact rational for ``epsilon``.

    Strings with a ``/`` and ``Fraction`` values are taken verbatim; floats
    (and decimal strings) are rounded to a denominator of 10**9.
    """
    if isinstance(epsilon, Fraction):
        return epsilon
    if isinstance(epsilon, tuple):
        return Fraction(*epsilon)
    if isinstance(epsilon, str) and "/" in epsilon:
        return Fraction(epsilon.strip())
    return Fraction(round(float(epsilon) * 10**9), 10**9)


@dataclass(frozen=True)
class Params:
    w: int
    L: int
    epsilon: Fraction
    n: int
    r: int
    seed: int

    @property
    def U(self) -> int:
        return 1 << self.w

    @property
    def exact(self) -> bool:
        """True when r was clamped to the universe: no false positives at all."""
        return self.r == self.U

    @property
    def r_bits(self) -> int:
        return self.r.bit_length() - 1


def reduced_universe(n: int, L: int, epsilon: Fraction, w: int) -> int:
    # smallest 2^t with 2^t >= n*L/eps, i.e. 2^t * num >= n*L*den
    target = n * L * epsilon.denominator
    t = 0
    while (1 << t) * epsilon.numerator < target:
        t += 1
    return max(min(1 << t, 1 << w), L)


def validate_params(w: int, L: int, epsilon, n: int, seed: int = 0) -> Params:
    if not 1 <= w <= 64:
        raise ParamError(f"universe bits must be in 1..64, got {w}")
    if not is_pow2(L):
        raise ParamError(f"max_len must be a power of two, got {L}")
    if L > (1 << w):
        raise ParamError(f"max_len {L} exceeds universe 2^{w}")
    eps = as_fraction(epsilon)
    if not 0 < eps < 1:
        raise ParamError(f"epsilon must lie in (0, 1), got {eps}")
    if n < 0:
        raise ParamError("n must be non-negative")
    if not 0 <= seed <= MAX_U64:
        raise ParamError("seed must be a 64-bit unsigned value")
    return Params(w=w, L=L, epsilon=eps, n=n, r=reduced_universe(n, L, eps, w), seed=seed)


@dataclass(frozen=True)
class Interval:
    a: int
    b: int

    def __post_init__(self):
        if not 0 <= self.a <= self.b <= MAX_U64:
            raise ValueError(f"bad interval [{self.a}, {self.b}]")

    @property
    def length(self) -> int:
        return self.b - self.a + 1

    def __contains__(self, x: int) -> bool:
        return self.a <= x <= self.b

    def check(self, universe: int) -> "Interval":
        if self.b >= universe:
            raise ValueError(f"interval [{self.a}, {self.b}] leaves universe of size {universe}")
        return self


class PointSet:
    """Sorted, distinct points below ``2**w`` held as a ``uint64`` array."""

    __slots__ = ("pts", "w")

    def __init__(self, values: Iterable[int], w: int, *, sort: bool = True):
        vals = [int(v) for v in values]
        if sort:
            vals.sort()
        for prev, cur in zip(vals, vals[1:]):
            if cur == prev:
                raise ValueError(f"duplicate point {cur}")
            if cur < prev:
                raise ValueError("points are not sorted")
        if vals and (vals[0] < 0 or vals[-1] >= (1 << w)):
            raise ValueError(f"point outside universe [0, 2^{w})")
        self.pts = np.array(vals, dtype=np.uint64)
        self.w = w

    def __len__(self) -> int:
        return len(self.pts)

    def __iter__(self):
        return (int(v) for v in self.pts)

    def __repr__(self) -> str:
        return f"PointSet(n={len(self)}, w={self.w})"
