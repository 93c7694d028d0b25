from __future__ import annotations

import operator

from hypothesis import given, settings
from hypothesis import strategies as st

from heapsafe.hir.types import wrap_int
from heapsafe.intervals import Interval
from heapsafe.symexec import si, si_binop, si_iv, si_refine


@st.composite
def intervals(draw):
    lo = draw(st.integers(-40, 40))
    width = draw(st.integers(0, 30))
    stride = draw(st.integers(1, 4))
    return Interval(lo, lo + width, stride)


def members(iv):
    return set(iv.values())


@given(intervals(), intervals())
def test_join_covers_both(a, b):
    j = a.join(b)
    assert members(a) | members(b) <= members(j)
    assert a.leq(j) and b.leq(j)


@given(intervals(), intervals())
def test_meet_keeps_the_common_values(a, b):
    m = a.meet(b)
    common = members(a) & members(b)
    if m is None:
        assert not common
    else:
        assert common <= members(m)


@given(intervals(), intervals(), st.sampled_from(["add", "sub", "mul"]))
def test_arithmetic_is_sound(a, b, op):
    f = {"add": operator.add, "sub": operator.sub, "mul": operator.mul}[op]
    r = {"add": a + b, "sub": a - b, "mul": a * b}[op]
    for x in members(a):
        for y in members(b):
            assert r.contains(f(x, y))


@given(intervals(), st.sampled_from(["i8", "i16"]))
def test_wrap_is_sound(a, tag):
    w = (a.scale(9)).wrap(tag)
    for x in members(a.scale(9)):
        assert w.contains(wrap_int(x, tag))


def test_unbounded_stays_unbounded():
    assert not (Interval.top() + Interval.const(3)).is_finite
    assert Interval.top().is_top


@settings(max_examples=200)
@given(intervals(), intervals(), st.sampled_from(["lt", "le", "gt", "ge", "eq", "ne"]))
def test_symbolic_refinement_never_drops_a_witness(a, b, pred):
    cmp = {"lt": operator.lt, "le": operator.le, "gt": operator.gt, "ge": operator.ge,
           "eq": operator.eq, "ne": operator.ne}[pred]
    x, y = si(a), si(b)
    r = si_refine(x, pred, y)
    wit = {v for v in members(a) if any(cmp(v, w) for w in members(b))}
    if r is None:
        assert not wit
    else:
        kept = r if isinstance(r, frozenset) else None
        for v in wit:
            assert v in kept if kept is not None else si_iv(r).contains(v)


@given(intervals(), intervals(), st.sampled_from(["add", "sub", "mul"]))
def test_symbolic_arithmetic_is_sound(a, b, op):
    f = {"add": operator.add, "sub": operator.sub, "mul": operator.mul}[op]
    r = si_binop(op, si(a), si(b), "i64")
    for x in members(a):
        for y in members(b):
            v = f(x, y)
            assert v in r if isinstance(r, frozenset) else si_iv(r).contains(v)
