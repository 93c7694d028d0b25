from __future__ import annotations

from heapsafe.alias import (
    classify_alias_region, compute_points_to, global_alias_class, validate_global_aliases,
)
from heapsafe.hir import ArrayType, NamedType, PrimType, parse_program

from conftest import corpus_program


def pts(src, heap_clone=False):
    p = parse_program(src)
    return p, compute_points_to(p, heap_clone)


def test_copy_edge_shares_the_site():
    p, m = pts("fn main() {\nb0:\n  a = alloc 4\n  b = cast a, i8\n  ret\n}")
    assert m.sites_of("main", "a") == {"main:a"}
    assert m.sites_of("main", "b") == {"main:a"}


GLOBAL_ROUND_TRIP = """
global g: ref<i8>

fn main() {
b0:
  a = alloc 4
  p = cast a, i8
  store @g, p
  q = load @g
  ret
}
"""


def test_store_and_load_through_a_global():
    p, m = pts(GLOBAL_ROUND_TRIP)
    assert m.sites_of("main", "q") == {"main:a"}
    assert classify_alias_region(p, "main", "q", m) == "global"
    assert classify_alias_region(p, "main", "p", m) == "stack"


BRANCH = """
fn main(k: i8 in 0..1) {
b0:
  c = cmp eq k, 0
  br c, l, r
l:
  x = alloc 4
  jmp j
r:
  y = alloc 8
  jmp j
j:
  z = phi [l: x], [r: y]
  ret
}
"""


def test_phi_merges_sites_from_both_branches():
    _, m = pts(BRANCH)
    assert m.sites_of("main", "z") == {"main:x", "main:y"}
    assert m.site_values["main:x"] == {("main", "x"), ("main", "z")}


def test_heap_region_for_loads_from_heap_cells():
    p, m = pts("""
type Node = { val: i64, next: ref<Node> }

fn main() {
b0:
  a = alloc Node
  b = alloc Node
  store b.next, a
  c = load b.next
  ret
}
""")
    assert m.sites_of("main", "c") == {"main:a"}
    assert classify_alias_region(p, "main", "c", m) == "heap"


def test_heap_cloning_separates_call_contexts():
    src = """
fn mk() -> ref<i8> {
b0:
  a = alloc 4
  p = cast a, i8
  ret p
}

fn main() {
b0:
  x = call mk()
  y = call mk()
  ret
}
"""
    _, plain = pts(src)
    _, cloned = pts(src, heap_clone=True)
    assert plain.value_sites[("main", "x")] == plain.value_sites[("main", "y")]
    assert cloned.value_sites[("main", "x")] != cloned.value_sites[("main", "y")]


def test_global_classes():
    p = parse_program("type B = { n: i32, p: ref<i8> }\ntype C = { b: B }\n"
                      "type D = { n: i64 }\nfn main() {\nb0:\n  ret\n}")
    assert global_alias_class(p, PrimType("ref")) == "a"
    assert global_alias_class(p, NamedType("B")) == "b"
    assert global_alias_class(p, NamedType("C")) == "c"
    assert global_alias_class(p, ArrayType(PrimType("ref"), 2)) == "c"
    assert global_alias_class(p, NamedType("D")) is None


def test_initialized_global_alias_is_allowed_and_uninitialized_is_not():
    ok = corpus_program("global_init_alias")
    bad = corpus_program("global_uninit_alias")
    assert validate_global_aliases(ok, compute_points_to(ok)) == {}
    flagged = validate_global_aliases(bad, compute_points_to(bad))
    assert flagged and all(r == {"global-alias"} for r in flagged.values())


def _global_prog(decl, path):
    return parse_program(f"""type T = {{ v: i64 }}
type B = {{ n: i32, p: ref<T> }}
type C = {{ b: B }}
{decl}

fn main() {{
b0:
  x = load @g.{path}
  store x.v, 1
  ret
}}
""")


def test_initialized_flat_record_global_passes_and_nested_one_does_not():
    from heapsafe.classifier import classify_all

    flat = classify_all(_global_prog("global g: B = { n: 1, p: alloc T }", "p"))
    assert [(s.id, s.verdict) for s in flat.sites] == [("@g.p", "Safe")]
    nested = classify_all(_global_prog("global g: C = { b: { n: 1, p: alloc T } }", "b.p"))
    assert [(s.id, s.verdict, s.reasons) for s in nested.sites] == [
        ("@g.b.p", "Unsafe", ["global-alias"])]
