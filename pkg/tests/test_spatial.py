from __future__ import annotations

import pytest

from heapsafe.classifier import analyze_static
from heapsafe.intervals import Interval
from heapsafe.spatial import SpatialState, apply_realloc_rule, eval_index_range, realloc_reasons
from heapsafe.hir import parse_program


def static_reasons(src, site):
    return analyze_static(parse_program(src)).verdicts[site].reasons


def prog(body, params=""):
    return f"fn main({params}) {{\nb0:\n{body}\n  ret\n}}\n"


def test_constant_buffer_uses_at_both_ends_are_safe():
    src = prog("  a = alloc 10\n  p = cast a, i8\n  e0 = gep p, 0\n  store e0, 1\n"
               "  e9 = gep p, 9\n  store e9, 1")
    assert static_reasons(src, "main:a") == []


def test_one_past_the_end_is_out_of_bounds():
    src = prog("  a = alloc 10\n  p = cast a, i8\n  e = gep p, 10\n  store e, 1")
    assert static_reasons(src, "main:a") == ["out-of-bounds"]


def test_input_sized_allocation():
    src = prog("  a = alloc n\n  p = cast a, i8\n  store p, 1", "n: i64 in 1..4")
    assert "non-constant-size" in static_reasons(src, "main:a")


def test_negative_step():
    src = prog("  a = alloc 10\n  p = cast a, i8\n  e = gep p, 5\n  f = gep e, -4\n  store f, 1")
    assert static_reasons(src, "main:a") == ["negative-offset"]


def test_input_offset_is_not_constant():
    src = prog("  a = alloc 10\n  p = cast a, i8\n  e = gep p, n\n  store e, 1", "n: i64 in 0..100")
    assert static_reasons(src, "main:a") == ["non-constant-offset"]


def test_unbounded_loop_offset_is_not_constant():
    src = """
fn main(n: i64 in 0..100) {
b0:
  a = alloc 10
  p = cast a, i8
  jmp h
h:
  i = phi [b0: 0], [b: j]
  c = cmp lt i, n
  br c, b, d
b:
  e = gep p, i
  store e, 1
  j = add i, 1
  jmp h
d:
  ret
}
"""
    assert static_reasons(src, "main:a") == ["non-constant-offset"]


@pytest.mark.parametrize("new, access, want", [
    (16, 12, []),
    (10, 0, []),
    (8, 0, ["realloc-shrink"]),
])
def test_realloc_rules(new, access, want):
    src = prog(f"  a = alloc {'16' if new == 8 else '10'}\n  b = realloc a, {new}\n"
               f"  p = cast b, i8\n  e = gep p, {access}\n  store e, 1")
    assert static_reasons(src, "main:a") == want


def test_old_alias_keeps_the_old_size():
    src = prog("  a = alloc 10\n  q = cast a, i8\n  b = realloc a, 16\n  e = gep q, 12\n  store e, 1")
    assert static_reasons(src, "main:a") == ["out-of-bounds"]


def test_eval_index_range():
    assert eval_index_range(Interval.const(4), 3) == Interval(7, 7)
    assert eval_index_range(Interval(0, 2), Interval(1, 1)) == Interval(1, 3)
    assert not eval_index_range(Interval.top(), 1).is_finite


def test_realloc_rule_state_machine():
    s = SpatialState(Interval.const(10))
    g = apply_realloc_rule(s, 16)
    assert g.size == Interval.const(16) and g.history == [10] and g.unsafe is None
    assert apply_realloc_rule(s, 10).unsafe is None
    assert apply_realloc_rule(s, 4).unsafe == "realloc-shrink"
    assert apply_realloc_rule(s, Interval(12, 20)).unsafe == "realloc-variable"
    assert apply_realloc_rule(SpatialState(None), 4).unsafe == "non-constant-size"
    # an unsafe state stays unsafe
    bad = apply_realloc_rule(s, 4)
    assert apply_realloc_rule(bad, 100) is bad
    assert realloc_reasons(Interval.const(8), None) == []
