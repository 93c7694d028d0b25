"""Simulated runtime heap.

Safe sites allocate from per-type pools: a span of memory, once given to a
type, only ever holds objects of that type, so a dangling pointer can at
worst reach another object of the type it was created for.  Unsafe sites
allocate from a separate region, and every access through an unsafe handle
is forced back into that region by masking the address bits.  Memory fresh
from the simulated OS reads as zero.

``replay_trace`` drives a heap with a JSON-lines trace of allocations and
accesses (including stale accesses through freed handles) and checks the
heap invariants as it goes.
"""

from __future__ import annotations

import bisect
import hashlib
import json
from dataclasses import dataclass, field

from .hir.types import AllocatedType

UNSAFE_BASE = 0x700000000000
UNSAFE_BITS = 40
UNSAFE_SIZE = 1 << UNSAFE_BITS
SAFE_BASE = 0x100000000000
SAFE_SIZE = 1 << 40
SLOT_ALIGN = 16
PAGE = 4096
SLOTS_PER_SPAN = 32

OUTCOMES = ("ok", "oob-blocked-by-classification", "masked", "type-preserved-reuse",
            "double-free", "ubi-zero-read", "type-confused-reuse")
OPS = ("alloc", "free", "realloc", "write", "read", "stale_read", "stale_write")


class AllocError(Exception):
    """A heap operation that cannot be carried out (exhaustion, bad free)."""

    def __init__(self, kind: str, msg: str):
        super().__init__(msg)
        self.kind = kind  # double-free | foreign-address | exhausted


class TraceError(ValueError):
    """A malformed trace line."""


def round_up(n: int, k: int) -> int:
    return (n + k - 1) // k * k


def mask_unsafe(addr: int) -> int:
    """Force an address into the unsafe region."""
    return UNSAFE_BASE | (addr & (UNSAFE_SIZE - 1))


def in_unsafe_region(addr: int) -> bool:
    return UNSAFE_BASE <= addr < UNSAFE_BASE + UNSAFE_SIZE


@dataclass
class Span:
    start: int
    size: int
    slot: int
    key: int  # owning pool: a type hash, or a slot size when pools are off

    @property
    def end(self) -> int:
        return self.start + self.size


@dataclass
class Pool:
    key: int
    slot: int
    allocated_type: AllocatedType | None = None
    spans: list[Span] = field(default_factory=list)
    freelist: list[int] = field(default_factory=list)  # LIFO: pop from the end
    bump: int = 0  # next never-used slot in the last span


@dataclass
class Slot:
    addr: int
    size: int  # object size S
    slot: int
    type_hash: int | None  # None on the unsafe heap
    live: bool = True


class HeapState:
    """Safe pools, the unsafe region and a sparse byte store.

    With ``pools_enabled=False`` the safe heap pools by slot size only, as
    an ordinary size-class allocator would; tests use it to show what type
    pools prevent.
    """

    def __init__(self, pools_enabled: bool = True):
        self.pools_enabled = pools_enabled
        self.pools: dict[int, Pool] = {}
        self.spans: list[Span] = []
        self._span_starts: list[int] = []
        self.safe_cursor = SAFE_BASE
        self.slots: dict[int, Slot] = {}
        self.occupant: dict[int, int] = {}  # safe slot -> type hash of its latest object
        self.unsafe_cursor = UNSAFE_BASE
        self.unsafe_free: dict[int, list[int]] = {}
        self.unsafe_slots: dict[int, Slot] = {}
        self.store: dict[int, int] = {}
        self.log: list[tuple] = []

    # -- safe heap -----------------------------------------------------------------
    def _pool(self, t: AllocatedType) -> Pool:
        slot = round_up(max(t.total_size, 1), SLOT_ALIGN)
        key = t.type_hash if self.pools_enabled else slot
        pool = self.pools.get(key)
        if pool is None:
            pool = self.pools[key] = Pool(key, slot, t if self.pools_enabled else None)
        return pool

    def _new_span(self, pool: Pool) -> Span:
        size = round_up(pool.slot * SLOTS_PER_SPAN, PAGE)
        if self.safe_cursor + size > SAFE_BASE + SAFE_SIZE:
            raise AllocError("exhausted", "safe heap address space exhausted")
        span = Span(self.safe_cursor, size, pool.slot, pool.key)
        self.safe_cursor += size
        # fresh pages from the OS: nothing in the store, so they read as zero
        for a in [a for a in self.store if span.start <= a < span.end]:
            del self.store[a]
        pool.spans.append(span)
        pool.bump = span.start
        self.spans.append(span)
        self._span_starts.append(span.start)
        return span

    def span_of(self, addr: int) -> Span | None:
        i = bisect.bisect_right(self._span_starts, addr) - 1
        if i >= 0 and self.spans[i].start <= addr < self.spans[i].end:
            return self.spans[i]
        return None

    def salloc(self, t: AllocatedType) -> int:
        pool = self._pool(t)
        if pool.freelist:
            addr = pool.freelist.pop()
        else:
            if not pool.spans or pool.bump + pool.slot > pool.spans[-1].end:
                self._new_span(pool)
            addr = pool.bump
            pool.bump += pool.slot
        self.slots[addr] = Slot(addr, t.total_size, pool.slot, t.type_hash)
        self.occupant[addr] = t.type_hash
        self.log.append(("salloc", addr, t.type_hash))
        return addr

    def sfree(self, addr: int) -> None:
        s = self.slots.get(addr)
        if s is None:
            if in_unsafe_region(addr) or self.span_of(addr) is None:
                raise AllocError("foreign-address", f"{addr:#x} is not a safe-heap slot")
            raise AllocError("foreign-address", f"{addr:#x} is not a slot start")
        if not s.live:
            raise AllocError("double-free", f"{addr:#x} freed twice")
        s.live = False
        span = self.span_of(addr)
        self.pools[span.key].freelist.append(addr)
        self.log.append(("sfree", addr))

    def srealloc(self, addr: int, t_new: AllocatedType) -> int:
        old = self.slots.get(addr)
        if old is None or not old.live:
            self.sfree(addr)  # raises the matching error
        new = self.salloc(t_new)
        self._copy(addr, new, min(old.size, t_new.total_size))
        self.sfree(addr)
        return new

    # -- unsafe heap ------------------------------------------------------------------
    def ualloc(self, size: int) -> int:
        if size <= 0:
            raise ValueError("unsafe allocation size must be positive")
        slot = round_up(size, SLOT_ALIGN)
        fl = self.unsafe_free.get(slot)
        if fl:
            addr = fl.pop()
        else:
            if self.unsafe_cursor + slot > UNSAFE_BASE + UNSAFE_SIZE:
                raise AllocError("exhausted", "unsafe region exhausted")
            addr = self.unsafe_cursor
            self.unsafe_cursor += slot
        self.unsafe_slots[addr] = Slot(addr, size, slot, None)
        self.log.append(("ualloc", addr, size))
        return addr

    def ufree(self, addr: int) -> None:
        s = self.unsafe_slots.get(addr)
        if s is None:
            raise AllocError("foreign-address", f"{addr:#x} is not an unsafe-heap slot")
        if not s.live:
            raise AllocError("double-free", f"{addr:#x} freed twice")
        s.live = False
        self.unsafe_free.setdefault(s.slot, []).append(addr)
        self.log.append(("ufree", addr))

    def urealloc(self, addr: int, size: int) -> int:
        old = self.unsafe_slots.get(addr)
        if old is None or not old.live:
            self.ufree(addr)
        new = self.ualloc(size)
        self._copy(addr, new, min(old.size, size))
        self.ufree(addr)
        return new

    # -- bytes ------------------------------------------------------------------------
    def _copy(self, src: int, dst: int, n: int) -> None:
        for k in range(n):
            v = self.store.get(src + k)
            if v is None:
                self.store.pop(dst + k, None)
            else:
                self.store[dst + k] = v

    def write(self, addr: int, data: bytes) -> None:
        for k, b in enumerate(data):
            self.store[addr + k] = b

    def read(self, addr: int, n: int) -> tuple[bytes, bool]:
        """The bytes at ``addr`` and whether any of them was never written."""
        out = bytearray(n)
        fresh = False
        for k in range(n):
            v = self.store.get(addr + k)
            if v is None:
                fresh = True
            else:
                out[k] = v
        return bytes(out), fresh

    def checksum(self) -> dict:
        h = hashlib.sha256()
        for a in sorted(self.store):
            h.update(f"{a:x}:{self.store[a]:x};".encode())
        return {
            "spans": len(self.spans),
            "pools": len(self.pools),
            "live_safe": sum(s.live for s in self.slots.values()),
            "free_safe": sum(len(p.freelist) for p in self.pools.values()),
            "live_unsafe": sum(s.live for s in self.unsafe_slots.values()),
            "store_sha256": h.hexdigest(),
        }


# -- invariants ------------------------------------------------------------------------------


def check_invariants(state: HeapState, span_keys: dict[int, int] | None = None) -> list[str]:
    """Whole-heap invariant check; returns the violations found.

    ``span_keys`` is an independent record of the pool each span was first
    given to, used for the span ownership check.
    """
    out = []
    prev_end = None
    for sp in state.spans:
        if prev_end is not None and sp.start < prev_end:
            out.append(f"span-overlap at {sp.start:#x}")
        prev_end = sp.end
        if span_keys is not None and span_keys.get(sp.start) != sp.key:
            out.append(f"span-type-changed at {sp.start:#x}")
    for key, pool in state.pools.items():
        for sp in pool.spans:
            if sp.key != key or sp.slot != pool.slot:
                out.append(f"span {sp.start:#x} not owned by pool {key:x}")
        free = set(pool.freelist)
        if len(free) != len(pool.freelist):
            out.append(f"pool {key:x}: freelist holds a slot twice")
        dead = {a for a, s in state.slots.items() if not s.live and state.span_of(a).key == key}
        if free != dead:
            out.append(f"pool {key:x}: freelist differs from the freed slots")
    for a, s in state.slots.items():
        sp = state.span_of(a)
        if sp is None or (a - sp.start) % sp.slot or a + sp.slot > sp.end or s.slot != sp.slot:
            out.append(f"slot {a:#x} off the span grid")
        elif state.pools_enabled and s.type_hash != sp.key:
            out.append(f"slot {a:#x} of type {s.type_hash:x} in span of {sp.key:x}")
    for a, s in state.unsafe_slots.items():
        if not (in_unsafe_region(a) and in_unsafe_region(a + s.slot - 1)):
            out.append(f"unsafe slot {a:#x} outside the region")
    live_unsafe = sorted((a, a + s.slot) for a, s in state.unsafe_slots.items() if s.live)
    for (a0, e0), (a1, _) in zip(live_unsafe, live_unsafe[1:]):
        if a1 < e0:
            out.append(f"unsafe slots {a0:#x} and {a1:#x} overlap")
    for a, s in state.unsafe_slots.items():
        fl = state.unsafe_free.get(s.slot, [])
        if (not s.live) != (a in fl):
            out.append(f"unsafe freelist out of sync at {a:#x}")
    return out


# -- traces ------------------------------------------------------------------------------------


@dataclass
class TraceEvent:
    op: str
    handle: str | None = None
    site: str | None = None
    type_hash: str | None = None
    size: int | None = None
    new_handle: str | None = None
    offset: int = 0
    len: int = 0
    value: int | None = None
    thread: int = 0
    line: int = 0

    @staticmethod
    def from_json(d: dict, line: int = 0) -> TraceEvent:
        if not isinstance(d, dict):
            raise TraceError(f"line {line}: event must be an object")
        op = d.get("op")
        if op not in OPS:
            raise TraceError(f"line {line}: unknown op {op!r}")
        known = {"op", "handle", "site", "type_hash", "size", "new_handle", "offset", "len",
                 "value", "thread"}
        extra = sorted(set(d) - known)
        if extra:
            raise TraceError(f"line {line}: unknown fields {', '.join(extra)}")
        ev = TraceEvent(op, d.get("handle"), d.get("site"), d.get("type_hash"), d.get("size"),
                        d.get("new_handle"), d.get("offset", 0), d.get("len", 0), d.get("value"),
                        d.get("thread", 0), line)
        for name in ("offset", "len", "thread"):
            if not isinstance(getattr(ev, name), int) or isinstance(getattr(ev, name), bool):
                raise TraceError(f"line {line}: {name} must be an integer")
        if ev.size is not None and (not isinstance(ev.size, int) or ev.size <= 0):
            raise TraceError(f"line {line}: size must be a positive integer")
        if ev.handle is None or not isinstance(ev.handle, str):
            raise TraceError(f"line {line}: {op} needs a handle")
        if op == "alloc" and ev.site is None and ev.type_hash is None and ev.size is None:
            raise TraceError(f"line {line}: alloc needs a site, a type_hash or a size")
        if op == "realloc" and ev.new_handle is None:
            raise TraceError(f"line {line}: realloc needs a new_handle")
        if op in ("write", "read", "stale_read", "stale_write") and (ev.len <= 0 or ev.len > 64):
            raise TraceError(f"line {line}: len must be in 1..64")
        if op in ("write", "stale_write") and not isinstance(ev.value, int):
            raise TraceError(f"line {line}: {op} needs an integer value")
        return ev

    def to_json(self) -> dict:
        d = {"op": self.op, "handle": self.handle, "thread": self.thread}
        for k in ("site", "type_hash", "size", "new_handle", "value"):
            v = getattr(self, k)
            if v is not None:
                d[k] = v
        if self.op in ("write", "read", "stale_read", "stale_write"):
            d["offset"], d["len"] = self.offset, self.len
        return d


def parse_trace(text: str) -> list[TraceEvent]:
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
        except json.JSONDecodeError as e:
            raise TraceError(f"line {n}: {e.msg}") from None
        out.append(TraceEvent.from_json(d, n))
    return out


def dump_trace(events) -> str:
    return "".join(json.dumps(e.to_json(), sort_keys=True) + "\n" for e in events)


@dataclass
class Handle:
    name: str
    addr: int
    size: int
    type_hash: int | None  # None: unsafe heap
    live: bool = True

    @property
    def safe(self) -> bool:
        return self.type_hash is not None


@dataclass
class TraceReport:
    outcomes: list[dict] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)
    checksums: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def count(self, outcome: str) -> int:
        return sum(o["outcome"] == outcome for o in self.outcomes)

    def to_json(self) -> dict:
        return {"outcomes": self.outcomes, "violations": self.violations,
                "errors": self.errors, "checksums": self.checksums}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"


Placement = tuple  # ("safe", AllocatedType) | ("unsafe", size)


class _Replay:
    def __init__(self, state: HeapState, types: dict[int, AllocatedType], placement):
        self.h = state
        self.types = types
        self.placement = placement
        self.handles: dict[str, Handle] = {}
        self.span_keys: dict[int, int] = {sp.start: sp.key for sp in state.spans}
        self.shadow: dict[int, int] = dict(state.store)  # independent record of written bytes
        self.freed: dict[int, set[int]] = {}
        self.live: set[int] = {a for a, sl in state.slots.items() if sl.live}
        self.ulive: set[int] = {a for a, sl in state.unsafe_slots.items() if sl.live}
        self.report = TraceReport()

    def fail(self, msg):
        self.report.violations.append(msg)

    def _type(self, ev: TraceEvent) -> AllocatedType:
        try:
            key = int(ev.type_hash, 16) if isinstance(ev.type_hash, str) else int(ev.type_hash)
        except (TypeError, ValueError):
            raise TraceError(f"line {ev.line}: bad type_hash {ev.type_hash!r}") from None
        t = self.types.get(key)
        if t is None:
            raise TraceError(f"line {ev.line}: unknown type_hash {ev.type_hash}")
        return t

    def _where(self, ev: TraceEvent):
        if ev.site is not None:
            if self.placement is None:
                raise TraceError(f"line {ev.line}: site {ev.site} given but no program")
            where = self.placement(ev.site, ev)
            if where is None:
                raise TraceError(f"line {ev.line}: program has no allocation site {ev.site}")
            return where
        if ev.type_hash is not None:
            return ("safe", self._type(ev))
        return ("unsafe", ev.size)

    def handle(self, name, ev) -> Handle:
        h = self.handles.get(name)
        if h is None:
            raise TraceError(f"line {ev.line}: unknown handle {name!r}")
        return h

    # -- incremental invariant checks -------------------------------------------------------
    def _after_salloc(self, addr, t, freed_too=None):
        sp = self.h.span_of(addr)
        if sp is None:
            return self.fail(f"safe slot {addr:#x} outside every span")
        self.span_keys.setdefault(sp.start, sp.key)
        if self.span_keys[sp.start] != sp.key:
            self.fail(f"span {sp.start:#x} changed pool")
        if (addr - sp.start) % sp.slot or addr + sp.slot > sp.end:
            self.fail(f"slot {addr:#x} off the span grid")
        key = t.type_hash if self.h.pools_enabled else sp.slot
        if sp.key != key:
            self.fail(f"slot {addr:#x} handed out from a span of another pool")
        if addr in self.live:
            self.fail(f"slot {addr:#x} handed out while live")
        self.live.add(addr)
        self.freed.setdefault(sp.key, set()).discard(addr)
        if freed_too is not None:
            self._after_free(freed_too)
        else:
            self._check_freelist(sp.key)

    def _after_free(self, addr):
        sp = self.h.span_of(addr)
        self.live.discard(addr)
        self.freed.setdefault(sp.key, set()).add(addr)
        if self.span_keys.get(sp.start) != sp.key:
            self.fail(f"span {sp.start:#x} changed pool")
        fl = self.h.pools[sp.key].freelist
        if not fl or fl[-1] != addr:
            self.fail(f"pool {sp.key:x}: freed slot {addr:#x} not on top of the freelist")
        self._check_freelist(sp.key)

    def _check_freelist(self, key):
        fr = self.freed.get(key, set())
        fl = self.h.pools[key].freelist
        if len(fr) != len(fl) or (fl and fl[-1] not in fr):
            self.fail(f"pool {key:x}: freelist differs from the freed slots")

    def _write(self, addr, data):
        self.h.write(addr, data)
        for k, b in enumerate(data):
            self.shadow[addr + k] = b

    def _read(self, addr, n):
        data, fresh = self.h.read(addr, n)
        want = bytes(self.shadow.get(addr + k, 0) for k in range(n))
        if data != want:
            self.fail(f"read at {addr:#x} returned {data.hex()} instead of {want.hex()}")
        return data, fresh

    def _unsafe_addr(self, h: Handle, off: int, n: int):
        addr = mask_unsafe(h.addr + off)
        end = mask_unsafe(h.addr + off + n - 1)
        if not (in_unsafe_region(addr) and in_unsafe_region(end)):
            self.fail(f"unsafe access at {addr:#x} escaped the region")
        return addr

    # -- events ----------------------------------------------------------------------------
    def step(self, i: int, ev: TraceEvent):
        rec = {"index": i, "op": ev.op, "handle": ev.handle, "thread": ev.thread}
        try:
            rec.update(self._step(ev))
        except AllocError as e:
            rec.update(outcome=e.kind if e.kind == "double-free" else "error", detail=str(e))
            if e.kind != "double-free":
                self.report.errors.append(f"event {i}: {e}")
        self.report.outcomes.append(rec)

    def _alloc(self, ev, name):
        if name in self.handles:
            raise TraceError(f"line {ev.line}: handle {name!r} reused")
        kind, arg = self._where(ev)
        if kind == "safe":
            addr = self.h.salloc(arg)
            self._after_salloc(addr, arg)
            self.handles[name] = Handle(name, addr, arg.total_size, arg.type_hash)
        else:
            size = arg or ev.size
            if not size:
                raise TraceError(f"line {ev.line}: unsafe allocation needs a size")
            addr = self.h.ualloc(size)
            if addr in self.ulive:
                self.fail(f"unsafe slot {addr:#x} handed out while live")
            self.ulive.add(addr)
            if not (in_unsafe_region(addr) and in_unsafe_region(addr + size - 1)):
                self.fail(f"unsafe slot {addr:#x} outside the region")
            self.handles[name] = Handle(name, addr, size, None)
        return addr

    def _step(self, ev: TraceEvent) -> dict:
        op = ev.op
        if op == "alloc":
            addr = self._alloc(ev, ev.handle)
            return {"outcome": "ok", "address": f"{addr:#x}"}
        h = self.handle(ev.handle, ev)
        if op == "free":
            if not h.live:
                return {"outcome": "double-free"}
            if h.safe:
                self.h.sfree(h.addr)
                self._after_free(h.addr)
            else:
                self.h.ufree(h.addr)
                self.ulive.discard(h.addr)
            h.live = False
            return {"outcome": "ok"}
        if op == "realloc":
            if not h.live:
                return {"outcome": "double-free"}
            if ev.new_handle in self.handles:
                raise TraceError(f"line {ev.line}: handle {ev.new_handle!r} reused")
            if h.safe:
                t = self._type(ev) if ev.type_hash is not None else self.types[h.type_hash]
                old = h.addr
                addr = self.h.srealloc(old, t)
                self._after_salloc(addr, t, freed_too=old)
                n = min(h.size, t.total_size)
                for k in range(n):
                    if old + k in self.shadow:
                        self.shadow[addr + k] = self.shadow[old + k]
                    else:
                        self.shadow.pop(addr + k, None)
                self.handles[ev.new_handle] = Handle(ev.new_handle, addr, t.total_size, t.type_hash)
            else:
                size = ev.size or h.size
                old = h.addr
                addr = self.h.urealloc(old, size)
                self.ulive.discard(old)
                if addr in self.ulive:
                    self.fail(f"unsafe slot {addr:#x} handed out while live")
                self.ulive.add(addr)
                for k in range(min(h.size, size)):
                    if old + k in self.shadow:
                        self.shadow[addr + k] = self.shadow[old + k]
                    else:
                        self.shadow.pop(addr + k, None)
                self.handles[ev.new_handle] = Handle(ev.new_handle, addr, size, None)
            h.live = False
            return {"outcome": "ok", "address": f"{addr:#x}"}
        stale = op.startswith("stale_")
        if not stale and not h.live:
            raise TraceError(f"line {ev.line}: {op} through freed handle {ev.handle!r}; use stale_{op}")
        writing = op.endswith("write")
        data = ((ev.value or 0) & ((1 << (8 * ev.len)) - 1)).to_bytes(ev.len, "little") if writing else None
        inside = 0 <= ev.offset and ev.offset + ev.len <= h.size
        if h.safe:
            if not inside:
                # a safe verdict rules this access out; the runtime never performs it
                return {"outcome": "oob-blocked-by-classification"}
            addr = h.addr + ev.offset
            outcome = "ok"
            if stale:
                cur = self.h.occupant.get(h.addr)
                sp = self.h.span_of(h.addr)
                if self.span_keys.get(sp.start) != sp.key:
                    self.fail(f"span {sp.start:#x} changed pool")
                if cur == h.type_hash:
                    outcome = "type-preserved-reuse"
                else:
                    outcome = "type-confused-reuse"
                    self.fail(f"stale {ev.handle} of type {h.type_hash:x} reaches an object of type {cur:x}")
            if writing:
                self._write(addr, data)
                return {"outcome": outcome, "address": f"{addr:#x}"}
            got, fresh = self._read(addr, ev.len)
            if fresh and outcome == "ok":
                if any(self.shadow.get(addr + k) is None and got[k] != 0 for k in range(ev.len)):
                    self.fail(f"fresh bytes at {addr:#x} read non-zero")
                outcome = "ubi-zero-read" if not any(
                    self.shadow.get(addr + k) is not None for k in range(ev.len)) else "ok"
            return {"outcome": outcome, "address": f"{addr:#x}", "value": got.hex()}
        addr = self._unsafe_addr(h, ev.offset, ev.len)
        outcome = "ok" if inside and not stale else "masked"
        if writing:
            self._write(addr, data)
            return {"outcome": outcome, "address": f"{addr:#x}"}
        got, fresh = self._read(addr, ev.len)
        if outcome == "ok" and fresh and all(self.shadow.get(addr + k) is None for k in range(ev.len)):
            outcome = "ubi-zero-read"
        return {"outcome": outcome, "address": f"{addr:#x}", "value": got.hex()}


def replay_trace(state: HeapState, events, types: dict[int, AllocatedType] | None = None,
                 placement=None, full_check_every: int = 0) -> TraceReport:
    """Replay ``events`` against ``state``.

    ``types`` maps type hashes to allocated types for events that name a
    type directly.  ``placement(site, event)`` decides where a site's
    objects go: ``("safe", AllocatedType)``, ``("unsafe", size)`` or None
    for an unknown site.  Cheap invariant checks run after every event; the
    whole-heap check runs every ``full_check_every`` events (0: at the end
    only).  Malformed events raise TraceError.
    """
    r = _Replay(state, dict(types or {}), placement)
    for i, ev in enumerate(events):
        if isinstance(ev, dict):
            ev = TraceEvent.from_json(ev, i + 1)
        r.step(i, ev)
        if full_check_every and (i + 1) % full_check_every == 0:
            r.report.violations += check_invariants(state, r.span_keys)
    r.report.violations += check_invariants(state, r.span_keys)
    r.report.checksums = state.checksum()
    return r.report


def random_trace(rng, n: int, types: list[AllocatedType], unsafe_share: float = 0.25,
                 max_live: int = 256) -> list[TraceEvent]:
    """A random well-formed trace of ``n`` events over ``types``.

    Handles are fresh per allocation; stale accesses go through freed
    handles, and a share of accesses overflow their object.
    """
    out: list[TraceEvent] = []
    live: list[tuple[str, int]] = []  # (handle, size)
    dead: list[tuple[str, int]] = []
    kinds: dict[str, object] = {}
    serial = 0

    def fresh():
        nonlocal serial
        serial += 1
        return f"h{serial}"

    while len(out) < n:
        r = rng.random()
        thread = rng.randrange(3)
        if not live or (r < 0.3 and len(live) < max_live):
            h = fresh()
            if rng.random() < unsafe_share:
                size = rng.choice((1, 8, 12, 24, 64, 100))
                out.append(TraceEvent("alloc", h, size=size, thread=thread))
                kinds[h] = None
            else:
                t = rng.choice(types)
                size = t.total_size
                out.append(TraceEvent("alloc", h, type_hash=f"{t.type_hash:016x}", thread=thread))
                kinds[h] = t
            live.append((h, size))
            continue
        if r < 0.45:
            h, size = live.pop(rng.randrange(len(live)))
            out.append(TraceEvent("free", h, thread=thread))
            dead.append((h, size))
            if rng.random() < 0.05:
                out.append(TraceEvent("free", h, thread=thread))
            continue
        if r < 0.5:
            i = rng.randrange(len(live))
            h, size = live[i]
            nh = fresh()
            if kinds[h] is None:
                size = rng.choice((8, 16, 40, 128))
                out.append(TraceEvent("realloc", h, new_handle=nh, size=size, thread=thread))
                kinds[nh] = None
            else:
                t = rng.choice(types)
                size = t.total_size
                out.append(TraceEvent("realloc", h, new_handle=nh, type_hash=f"{t.type_hash:016x}",
                                      thread=thread))
                kinds[nh] = t
            dead.append(live[i])
            live[i] = (nh, size)
            continue
        stale = dead and r > 0.9
        h, size = rng.choice(dead if stale else live)
        ln = rng.choice((1, 2, 4, 8))
        if rng.random() < 0.1:
            off = rng.choice((size, size + 8, 1 << 41, -16))
        else:
            off = rng.randrange(max(size - ln, 0) + 1) if size >= ln else 0
        if rng.random() < 0.5:
            out.append(TraceEvent("stale_write" if stale else "write", h, offset=off, len=ln,
                                  value=rng.getrandbits(8 * ln), thread=thread))
        else:
            out.append(TraceEvent("stale_read" if stale else "read", h, offset=off, len=ln,
                                  thread=thread))
    return out[:n]
