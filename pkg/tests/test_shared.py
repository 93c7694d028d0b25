from __future__ import annotations

from heapsafe.classifier import analyze_static, classify_all
from heapsafe.hir import parse_program
from heapsafe.shared import ThreadsSet, accumulated_index, find_shared_objects, thread_count, validate_shared

from conftest import corpus_program, corpus_source

WORKER = """
fn work(p: ref<i8>) {
b0:
  store p, 1
  ret
}
"""


def analysis(src):
    return analyze_static(parse_program(src)).analysis


def test_spawn_argument_is_shared():
    a = analysis(WORKER + "fn main() {\nb0:\n  b = alloc 4\n  p = cast b, i8\n"
                 "  spawn work(p)\n  ret\n}")
    flags = find_shared_objects(a)
    assert flags["main:b"].evidence == ("spawn-argument",)
    assert thread_count(a, "main:b") == ThreadsSet(1, ("work",))


def test_two_spawns_count_two():
    a = analysis(WORKER + "fn main() {\nb0:\n  b = alloc 4\n  p = cast b, i8\n"
                 "  spawn work(p)\n  spawn work(p)\n  ret\n}")
    assert thread_count(a, "main:b").count == 2


def test_spawn_in_constant_loop_counts_iterations():
    src = WORKER + """
fn main() {
b0:
  b = alloc 4
  p = cast b, i8
  jmp h
h:
  i = phi [b0: 0], [s: j]
  c = cmp lt i, 3
  br c, s, d
s:
  spawn work(p)
  j = add i, 1
  jmp h
d:
  ret
}
"""
    assert thread_count(analysis(src), "main:b").count == 3


def test_spawn_in_input_bounded_loop_is_unknown():
    p = corpus_program("spawn_loop_unknown")
    t = thread_count(analyze_static(p).analysis, "main:buf")
    assert not t.known
    assert "shared-unknown-threads" in classify_all(p).site("main:buf").reasons


def test_object_published_in_a_global_read_by_a_thread_is_shared():
    src = """
global g: ref<i8>

fn reader() {
b0:
  q = load @g
  v = load q
  ret
}

fn main() {
b0:
  b = alloc 4
  p = cast b, i8
  store @g, p
  spawn reader()
  ret
}
"""
    flags = find_shared_objects(analysis(src))
    assert "global" in flags["main:b"].evidence


def test_no_spawn_means_nothing_is_shared():
    a = analysis("fn main() {\nb0:\n  b = alloc 4\n  ret\n}")
    assert find_shared_objects(a) == {}


def test_relabelling_of_shared_failures():
    assert validate_shared(["out-of-bounds"], ThreadsSet(2)) == ["shared-out-of-bounds"]
    assert validate_shared([], ThreadsSet(None)) == ["shared-unknown-threads"]
    assert validate_shared([], ThreadsSet(2)) == []


def accum_program(size):
    return parse_program(corpus_source("shared_accum_overflow").replace("alloc 8", f"alloc {size}"))


def test_three_plus_five_accumulates_to_eight():
    st = analyze_static(accum_program(8))
    (cc,) = st.analysis.site_objects("main:cc")
    acc = accumulated_index(st.analysis, cc, 0)
    assert acc.hi == 8 and acc.lo == 0


def test_accumulated_index_flips_between_eight_and_nine():
    assert classify_all(accum_program(9)).site("main:buf").verdict == "Safe"
    v = classify_all(accum_program(8)).site("main:buf")
    assert v.verdict == "Unsafe" and v.reasons == ["shared-out-of-bounds"]
