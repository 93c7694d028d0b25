from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heapsafe.allocator import (
    PAGE, SAFE_BASE, SLOTS_PER_SPAN, UNSAFE_BASE, UNSAFE_SIZE, AllocError, HeapState, TraceError,
    TraceEvent, check_invariants, dump_trace, in_unsafe_region, mask_unsafe, parse_trace,
    random_trace, replay_trace,
)
from heapsafe.hir import NamedType, PrimType, Typedef, TypeTable


def types():
    t = TypeTable({
        "A": Typedef("A", (("x", PrimType("i64")), ("y", PrimType("i64")))),
        "B": Typedef("B", (("x", PrimType("i64")), ("y", PrimType("i64")))),
        "C": Typedef("C", (("c", PrimType("i8")),)),
        "D": Typedef("D", (("a", PrimType("i32")), ("b", PrimType("ref")), ("c", PrimType("i64")))),
    })
    return {n: t.allocated_type(NamedType(n)) for n in "ABCD"}


T = types()


def test_first_allocation_starts_the_span_and_reuse_is_lifo():
    h = HeapState()
    a = h.salloc(T["A"])
    assert a == SAFE_BASE and h.span_of(a).start == a
    b = h.salloc(T["A"])
    assert b == a + 16
    h.sfree(a)
    h.sfree(b)
    assert h.salloc(T["A"]) == b
    assert h.salloc(T["A"]) == a


def test_types_get_disjoint_spans():
    h = HeapState()
    a, b = h.salloc(T["A"]), h.salloc(T["B"])
    sa, sb = h.span_of(a), h.span_of(b)
    assert sa is not sb and (sa.end <= sb.start or sb.end <= sa.start)
    assert sa.size == max(PAGE, 16 * SLOTS_PER_SPAN)


def test_size_pools_mix_types_in_one_span():
    h = HeapState(pools_enabled=False)
    a = h.salloc(T["A"])
    h.sfree(a)
    assert h.salloc(T["B"]) == a


def test_double_and_foreign_frees():
    h = HeapState()
    a = h.salloc(T["A"])
    h.sfree(a)
    with pytest.raises(AllocError) as e:
        h.sfree(a)
    assert e.value.kind == "double-free"
    with pytest.raises(AllocError) as e:
        h.sfree(a + 8)
    assert e.value.kind == "foreign-address"
    with pytest.raises(AllocError):
        h.sfree(UNSAFE_BASE)
    u = h.ualloc(8)
    h.ufree(u)
    with pytest.raises(AllocError):
        h.ufree(u)


def test_realloc_copies_the_shorter_length():
    h = HeapState()
    a = h.salloc(T["D"])
    h.write(a, bytes(range(1, 21)))
    b = h.srealloc(a, T["C"])
    assert h.read(b, 1) == (b"\x01", False)
    c = h.srealloc(b, T["A"])
    data, fresh = h.read(c, 16)
    assert data[0] == 1 and fresh
    u = h.ualloc(4)
    h.write(u, b"abcd")
    v = h.urealloc(u, 40)
    assert h.read(v, 4) == (b"abcd", False)


def test_mask():
    assert mask_unsafe(0xDEADBEEF) == 0x7000DEADBEEF
    assert mask_unsafe(mask_unsafe(0xDEADBEEF)) == mask_unsafe(0xDEADBEEF)


@given(st.integers(0, (1 << 64) - 1))
def test_mask_is_idempotent_and_contained(addr):
    m = mask_unsafe(addr)
    assert mask_unsafe(m) == m
    assert UNSAFE_BASE <= m < UNSAFE_BASE + UNSAFE_SIZE and in_unsafe_region(m)


def test_unsafe_slots_are_reused():
    h = HeapState()
    a = h.ualloc(64)
    assert a == UNSAFE_BASE
    h.ufree(a)
    assert h.ualloc(64) == a
    with pytest.raises(ValueError):
        h.ualloc(0)


def test_fresh_memory_reads_zero():
    h = HeapState()
    a = h.salloc(T["A"])
    assert h.read(a, 16) == (bytes(16), True)


OPS = st.lists(st.tuples(st.sampled_from(["salloc", "sfree", "ualloc", "ufree", "write"]),
                         st.sampled_from("ABCD"), st.integers(0, 1000)), max_size=80)


@settings(max_examples=100, deadline=None)
@given(OPS, st.booleans())
def test_invariants_hold_under_random_operations(ops, pools):
    h = HeapState(pools)
    live_s, live_u, keys = [], [], {}
    model = {}
    for op, tn, n in ops:
        if op == "salloc":
            a = h.salloc(T[tn])
            live_s.append((a, T[tn].total_size))
        elif op == "sfree" and live_s:
            a, _ = live_s.pop(n % len(live_s))
            h.sfree(a)
        elif op == "ualloc":
            size = n % 100 + 1
            a = h.ualloc(size)
            live_u.append((a, size))
        elif op == "ufree" and live_u:
            a, _ = live_u.pop(n % len(live_u))
            h.ufree(a)
        elif op == "write" and (live_s or live_u):
            objs = live_s + live_u
            a, size = objs[n % len(objs)]
            h.write(a, bytes([n % 256]))
            model[a] = n % 256
        for sp in h.spans:
            keys.setdefault(sp.start, sp.key)
    assert check_invariants(h, keys) == []
    # byte model: reused slots keep old bytes, memory never written reads zero
    for a, size in live_s + live_u:
        data, _ = h.read(a, size)
        assert data == bytes(model.get(a + k, 0) for k in range(size))
    addrs = [a for a, _ in live_s]
    assert len(set(addrs)) == len(addrs)


def test_random_traces_replay_cleanly():
    rng = random.Random(7)
    tl = list(T.values())
    events = random_trace(rng, 3000, tl)
    reg = {t.type_hash: t for t in tl}
    rep = replay_trace(HeapState(), events, reg, full_check_every=500)
    assert rep.ok and not rep.errors
    assert rep.count("ok") > 0 and rep.count("masked") > 0
    assert rep.count("type-confused-reuse") == 0
    again = replay_trace(HeapState(), parse_trace(dump_trace(events)), reg)
    assert again.checksums == rep.checksums


def test_trace_validation():
    with pytest.raises(TraceError):
        parse_trace('{"op": "explode", "handle": "a"}\n')
    with pytest.raises(TraceError):
        parse_trace('{"op": "write", "handle": "a", "len": 4}\n')
    with pytest.raises(TraceError):
        parse_trace('{"op": "alloc", "handle": "a", "colour": 1}\n')
    with pytest.raises(TraceError):
        parse_trace("not json\n")
    assert parse_trace("\n") == []
    ev = TraceEvent.from_json({"op": "alloc", "handle": "a", "size": 12})
    assert ev.to_json() == {"op": "alloc", "handle": "a", "size": 12, "thread": 0}
