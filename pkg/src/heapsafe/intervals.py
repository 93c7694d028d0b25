"""Strided integer intervals.

An ``Interval(lo, hi, stride)`` stands for ``{lo, lo+stride, ...} ∩ [lo, hi]``.
A singleton has stride 0; an interval with an infinite bound has stride 1.
Empty intervals are never built: operations that can produce an empty result
return ``None``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .hir.types import int_range

INF = math.inf


def _gcd(*xs) -> int:
    g = 0
    for x in xs:
        g = math.gcd(g, int(abs(x)))
    return g


def _mul(a, b):
    if a == 0 or b == 0:
        return 0
    return a * b


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    stride: int = 1

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")
        if self.lo == self.hi:
            object.__setattr__(self, "stride", 0)
        elif math.isinf(self.lo) or math.isinf(self.hi):
            object.__setattr__(self, "stride", 1)
        else:
            s = max(int(self.stride), 1)
            # keep hi on the lattice so equal sets compare equal
            hi = self.lo + ((int(self.hi) - int(self.lo)) // s) * s
            object.__setattr__(self, "hi", hi)
            if hi == self.lo:
                object.__setattr__(self, "stride", 0)
            else:
                object.__setattr__(self, "stride", s)

    # -- constructors ---------------------------------------------------------
    @staticmethod
    def const(v: int) -> Interval:
        return Interval(v, v)

    @staticmethod
    def top() -> Interval:
        return Interval(-INF, INF)

    @staticmethod
    def of_tag(tag: str) -> Interval:
        lo, hi = int_range(tag)
        return Interval(lo, hi)

    # -- predicates -----------------------------------------------------------
    @property
    def is_singleton(self) -> bool:
        return self.lo == self.hi

    @property
    def is_finite(self) -> bool:
        return not (math.isinf(self.lo) or math.isinf(self.hi))

    @property
    def is_top(self) -> bool:
        return self.lo == -INF and self.hi == INF

    def contains(self, v: int) -> bool:
        if not self.lo <= v <= self.hi:
            return False
        if self.stride <= 1 or math.isinf(self.lo):
            return True
        return (v - self.lo) % self.stride == 0

    def within(self, lo, hi) -> bool:
        return self.lo >= lo and self.hi <= hi

    def values(self, limit: int = 1 << 16):
        if not self.is_finite:
            raise ValueError("cannot enumerate an unbounded interval")
        step = self.stride or 1
        n = (int(self.hi) - int(self.lo)) // step + 1
        if n > limit:
            raise ValueError("interval too large to enumerate")
        return range(int(self.lo), int(self.hi) + 1, step)

    def count(self) -> float:
        if not self.is_finite:
            return INF
        return (int(self.hi) - int(self.lo)) // (self.stride or 1) + 1

    # -- lattice --------------------------------------------------------------
    def join(self, other: Interval | None) -> Interval:
        if other is None or other == self:
            return self
        lo, hi = min(self.lo, other.lo), max(self.hi, other.hi)
        if math.isinf(lo) or math.isinf(hi):
            return Interval(lo, hi)
        s = _gcd(self.stride, other.stride, self.lo - other.lo)
        return Interval(lo, hi, s)

    def meet(self, other: Interval | None) -> Interval | None:
        if other is None:
            return None
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        if lo > hi:
            return None
        # keep the congruence of the coarser-grained operand
        base = self if self.stride >= other.stride else other
        if base.stride > 1 and not math.isinf(base.lo) and not math.isinf(lo):
            lo = base.lo + math.ceil((lo - base.lo) / base.stride) * base.stride
            if lo > hi:
                return None
            return Interval(lo, hi, base.stride)
        if math.isinf(lo) or math.isinf(hi):
            return Interval(lo, hi)
        return Interval(lo, hi, 1)

    def leq(self, other: Interval) -> bool:
        """Set inclusion (exact for the representable sets)."""
        if not (other.lo <= self.lo and self.hi <= other.hi):
            return False
        if other.stride <= 1 or math.isinf(other.lo):
            return True
        if self.is_singleton:
            return other.contains(self.lo)
        return self.stride % other.stride == 0 and other.contains(self.lo)

    # -- arithmetic -----------------------------------------------------------
    def __add__(self, other: Interval) -> Interval:
        lo, hi = self.lo + other.lo, self.hi + other.hi
        if math.isinf(lo) or math.isinf(hi):
            return Interval(lo, hi)
        return Interval(lo, hi, _gcd(self.stride, other.stride))

    def __neg__(self) -> Interval:
        return Interval(-self.hi, -self.lo, self.stride)

    def __sub__(self, other: Interval) -> Interval:
        return self + (-other)

    def __mul__(self, other: Interval) -> Interval:
        if other.is_singleton and not self.is_singleton:
            return other * self
        if self.is_singleton:
            c = self.lo
            if c == 0:
                return Interval.const(0)
            a, b = _mul(other.lo, c), _mul(other.hi, c)
            lo, hi = min(a, b), max(a, b)
            if math.isinf(lo) or math.isinf(hi):
                return Interval(lo, hi)
            return Interval(lo, hi, other.stride * abs(int(c)))
        prods = [_mul(x, y) for x in (self.lo, self.hi) for y in (other.lo, other.hi)]
        return Interval(min(prods), max(prods))

    def scale(self, k: int) -> Interval:
        return self * Interval.const(k)

    def shift(self, k: int) -> Interval:
        return self + Interval.const(k)

    def wrap(self, tag: str) -> Interval:
        """Over-approximate two's-complement wrapping into ``tag``."""
        lo, hi = int_range(tag)
        if self.within(lo, hi):
            return self
        return Interval(lo, hi)

    def __str__(self) -> str:
        def b(x):
            return "-inf" if x == -INF else "+inf" if x == INF else str(int(x))

        if self.is_singleton:
            return f"[{b(self.lo)}]"
        s = f"[{b(self.lo)}, {b(self.hi)}]"
        return s if self.stride <= 1 else f"{s}/{self.stride}"

    def to_json(self):
        def b(x):
            return None if math.isinf(x) else int(x)

        return [b(self.lo), b(self.hi)]


def join_all(items) -> Interval | None:
    out = None
    for it in items:
        if it is None:
            continue
        out = it if out is None else out.join(it)
    return out


def ijoin(a: Interval | None, b: Interval | None) -> Interval | None:
    if a is None:
        return b
    return a.join(b)


def imeet(a: Interval | None, b: Interval | None) -> Interval | None:
    if a is None or b is None:
        return None
    return a.meet(b)
