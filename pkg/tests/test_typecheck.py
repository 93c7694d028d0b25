from __future__ import annotations

from hypothesis import given, settings
from hypothesis import strategies as st

from heapsafe.classifier import classify_all
from heapsafe.hir import ArrayType, NamedType, PrimType, Typedef, TypeTable, parse_program
from heapsafe.intervals import Interval
from heapsafe.typecheck import (
    is_compatible_cast, raw_bytes, realloc_type_transition, resolve_delayed_type,
    validate_int_cast,
)

from conftest import corpus_program

PRIMS = ["i8", "i16", "i32", "i64", "ref"]


def table(**records):
    tds = {name: Typedef(name, tuple((f"f{i}", t) for i, t in enumerate(fields)))
           for name, fields in records.items()}
    return TypeTable(tds)


def at(t, name):
    return t.allocated_type(NamedType(name))


def test_reflexive_upcast_and_downcast():
    t = table(Base=[PrimType("i32")], Derived=[PrimType("i32"), PrimType("i64")])
    base, derived = at(t, "Base"), at(t, "Derived")
    assert is_compatible_cast(base, base)
    assert is_compatible_cast(derived, base)
    assert not is_compatible_cast(base, derived)


def test_integer_narrowing():
    assert validate_int_cast(Interval(0, 100), "i64", "i8")
    assert not validate_int_cast(Interval(0, 300), "i64", "i8")
    assert not validate_int_cast(Interval.of_tag("i64"), "i64", "i8")
    assert validate_int_cast(Interval(-128, 127), "i64", PrimType("i8"))


def test_delayed_type_resolution():
    t = table(Pair=[PrimType("i32"), PrimType("i64")], Head=[PrimType("i32")])
    pair = NamedType("Pair")
    assert resolve_delayed_type(t, 12, [pair]) == pair
    assert resolve_delayed_type(t, 12, [NamedType("Head"), pair]) == pair
    assert resolve_delayed_type(t, 24, [pair]) == ArrayType(pair, 2)
    assert resolve_delayed_type(t, 13, [pair]) is None
    assert resolve_delayed_type(t, 12, [pair, PrimType("i64")]) is None
    assert resolve_delayed_type(t, 12, []) is None
    assert raw_bytes(1) == PrimType("i8") and raw_bytes(5) == ArrayType(PrimType("i8"), 5)


def test_delayed_typing_on_programs():
    ok = classify_all(corpus_program("delayed_typing")).site("main:raw")
    assert ok.safe and ok.allocated_type.total_size == 12
    bad = classify_all(corpus_program("delayed_conflict")).site("main:raw")
    assert bad.verdict == "Unsafe" and bad.reasons == ["delayed-type"]
    assert classify_all(corpus_program("delayed_elided")).sites[0].safe


def test_realloc_transitions():
    i32, i64 = PrimType("i32"), PrimType("i64")
    t = table(Old=[i32, ArrayType(PrimType("i8"), 8)], Grown=[i32, ArrayType(PrimType("i8"), 16)],
              Appended=[i32, ArrayType(PrimType("i8"), 8), i64],
              Inserted=[i64, i32, ArrayType(PrimType("i8"), 8)])
    old = NamedType("Old")
    assert realloc_type_transition(t, old, NamedType("Grown")) == NamedType("Grown")
    assert realloc_type_transition(t, old, NamedType("Appended")) == NamedType("Appended")
    assert realloc_type_transition(t, old, NamedType("Inserted")) is None
    arr = ArrayType(i32, 4)
    assert realloc_type_transition(t, arr, None, 32) == ArrayType(i32, 8)
    assert realloc_type_transition(t, arr, None, 30) is None


def test_realloc_insert_is_unsafe():
    v = classify_all(corpus_program("realloc_insert")).site("main:s")
    assert v.verdict == "Unsafe" and "realloc-retype" in v.reasons


def test_int_cast_program():
    assert classify_all(corpus_program("int_cast_truncate")).sites[0].verdict == "Unsafe"


# -- cast lattice ----------------------------------------------------------------------

fields = st.lists(st.sampled_from(PRIMS), min_size=1, max_size=6)


def build(*layouts):
    t = table(**{f"T{i}": [PrimType(x) for x in fl] for i, fl in enumerate(layouts)})
    return [at(t, f"T{i}") for i in range(len(layouts))]


@settings(max_examples=300)
@given(fields)
def test_cast_is_reflexive(fl):
    (a,) = build(fl)
    assert is_compatible_cast(a, a)


@settings(max_examples=300)
@given(fields, st.integers(1, 6), st.integers(1, 6))
def test_prefix_casts_compose(fl, i, j):
    k1, k2 = sorted((min(i, len(fl)), min(j, len(fl))), reverse=True)
    a, b, c = build(fl, fl[:k1], fl[:k2])
    assert is_compatible_cast(a, b) and is_compatible_cast(b, c)
    assert is_compatible_cast(a, c)


@settings(max_examples=300)
@given(fields, fields)
def test_cast_fails_when_a_prefix_entry_differs(f1, f2):
    a, b = build(f1, f2)
    differs = len(b.layout) > len(a.layout) or any(
        x != y for x, y in zip(a.layout, b.layout))
    assert is_compatible_cast(a, b) == (not differs)


def test_field_names_do_not_matter_for_layout():
    t = TypeTable({"A": Typedef("A", (("x", PrimType("i32")),)),
                   "B": Typedef("B", (("y", PrimType("i32")),))})
    assert is_compatible_cast(at(t, "A"), at(t, "B"))
    assert parse_program("fn main() {\nb0:\n  ret\n}").table.size(PrimType("ref")) == 8
