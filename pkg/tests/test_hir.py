from __future__ import annotations

import pytest

from heapsafe.hir import (
    AllocatedType, HirError, NamedType, PrimType, build_indexes, flatten_layout,
    format_program, parse_program,
)

from conftest import CORPUS, corpus_source


def table_of(src):
    return parse_program(src + "\nfn main() {\nb0:\n  ret\n}\n").table


def test_layout_of_mixed_record():
    t = table_of("type P = { x: i32, y: i64 }")
    assert flatten_layout(NamedType("P"), t) == [(0, PrimType("i32")), (4, PrimType("i64"))]
    assert t.size(NamedType("P")) == 12


def test_nested_record_is_packed():
    t = table_of("type In = { x: i32 }\ntype Out = { a: In, b: i8 }")
    assert t.size(NamedType("Out")) == 5
    assert t.flat(NamedType("Out")) == ((0, "i32"), (4, "i8"))


def test_reference_field_is_eight_bytes():
    t = table_of("type R = { p: ref<R> }")
    assert t.size(NamedType("R")) == 8
    assert t.flat(NamedType("R")) == ((0, "ref"),)


def test_allocated_type_hash_is_stable_and_distinguishes_names():
    t = table_of("type A = { x: i64, y: i64 }\ntype B = { x: i64, y: i64 }")
    a, b = t.allocated_type(NamedType("A")), t.allocated_type(NamedType("B"))
    assert a.total_size == b.total_size == 16
    assert a.type_hash == t.allocated_type(NamedType("A")).type_hash
    assert a.type_hash != b.type_hash


def test_allocated_type_rejects_overlapping_fields():
    from heapsafe.hir import FieldDesc
    from heapsafe.hir.types import TypeError_

    with pytest.raises(TypeError_):
        AllocatedType(8, "T", (FieldDesc("a", PrimType("i64"), 0, 8),
                               FieldDesc("b", PrimType("i32"), 4, 4)))


@pytest.mark.parametrize("src, kind", [
    ("fn main() {\nb0:\n  x = alloc Nope\n  ret\n}", "unresolved"),
    ("fn main() {\nb0:\n  x = add 1, 2\n  x = add 1, 2\n  ret\n}", "ssa"),
    ("fn main() {\nb0:\n  x = add 1,\n  ret\n}", "syntax"),
])
def test_parser_reports_diagnostics(src, kind):
    with pytest.raises(HirError) as ei:
        parse_program(src)
    assert any(d.kind == kind for d in ei.value.diagnostics)


def test_every_corpus_program_round_trips_through_the_printer():
    for f in sorted(CORPUS.iterdir()):
        if not f.name.endswith(".hir"):
            continue
        p = parse_program(f.read_text())
        again = parse_program(format_program(p))
        assert format_program(again) == format_program(p), f.name


def test_straight_line_indexes():
    p = parse_program("fn main() {\nb0:\n  a = add 1, 2\n  b = add a, 1\n  ret\n}")
    fi = build_indexes(p)["main"]
    assert fi.defs["a"] == ("b0", 0)
    assert fi.uses["a"] == [("b0", 1)]
    assert fi.loops == {}


DIAMOND = """
fn main(x: i64 in 0..5) {
b0:
  c = cmp lt x, 3
  br c, l, r
l:
  a = add x, 1
  jmp j
r:
  b = add x, 2
  jmp j
j:
  m = phi [l: a], [r: b]
  n = add m, 1
  ret
}
"""


def test_diamond_dominators_and_def_use_across_join():
    fi = build_indexes(parse_program(DIAMOND))["main"]
    assert fi.idom["j"] == "b0"
    assert fi.dominates("b0", "l") and not fi.dominates("l", "j")
    assert fi.defs["m"] == ("j", 0)
    assert fi.uses["a"] == [("j", 0)] and fi.uses["m"] == [("j", 1)]


def test_constant_loop_trip_count():
    src = corpus_source("in_bounds_loop")
    fi = build_indexes(parse_program(src))["main"]
    (lp,) = fi.loops.values()
    assert lp.trips == 8
    assert lp.body_values() == (0, 7, 1)
