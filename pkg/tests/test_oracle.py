from __future__ import annotations

from heapsafe.hir import parse_program
from heapsafe.oracle import run_oracle

from conftest import corpus_program


def kinds(res):
    return sorted(f.kind for f in res.findings)


def test_in_bounds_program_has_no_findings():
    res = run_oracle(corpus_program("in_bounds_loop"))
    assert res.findings == [] and not res.partial


def test_off_by_one_is_witnessed():
    (f,) = run_oracle(corpus_program("off_by_one_loop")).findings
    assert f.kind == "oob" and f.site == "main:a"
    assert "[32, 36)" in f.detail


def test_guarded_downcast_is_clean():
    assert run_oracle(corpus_program("guarded_downcast")).findings == []


def test_unguarded_downcast_is_confused():
    res = run_oracle(corpus_program("unguarded_downcast"))
    assert "main:x" in res.sites_with()


def test_input_witness_is_reported():
    res = run_oracle(corpus_program("unchecked_offset"))
    bad = [f for f in res.findings if f.kind == "oob"]
    assert bad and all(f.inputs for f in bad)
    assert res.inputs > 1


def test_temporal_findings():
    src = """
fn main() {
b0:
  a = alloc 8
  p = cast a, i64
  store p, 1
  free a
  v = load p
  free a
  ret
}
"""
    assert kinds(run_oracle(parse_program(src))) == ["double-free", "uaf"]


def test_uninitialized_read_and_null():
    src = """
type R = { x: i64, next: ref<R> }

fn main() {
b0:
  a = alloc R
  v = load a.x
  n = load a.next
  w = load n.x
  ret
}
"""
    assert "null-deref" in kinds(run_oracle(parse_program(src)))


def test_shared_overflow_needs_the_interleavings():
    res = run_oracle(corpus_program("shared_accum_overflow"))
    assert res.threads == 3 and res.runs > res.inputs
    assert res.sites_with() == {"main:buf"}


def test_cap_marks_partial_results():
    res = run_oracle(corpus_program("shared_accum_overflow"), cap=3)
    assert res.partial


def test_json_is_sorted():
    d = run_oracle(corpus_program("off_by_one_loop")).to_json()
    assert d["findings"][0]["kind"] == "oob"
