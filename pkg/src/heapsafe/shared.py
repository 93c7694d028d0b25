"""Objects reachable from more than one thread.

With at least one spawn in the program, a site is shared when one of its
objects is passed to a spawned function, is reachable from global memory,
or has an alias stored in heap memory.  Cross-thread index accumulation is
already folded into the static offsets (see ``alias``); this module decides
which sites are shared, how many threads reach them, and relabels spatial
failures of shared sites.
"""

from __future__ import annotations

from dataclasses import dataclass

from .alias import AbsObj, Ptr, StaticAnalysis
from .events import Event
from .intervals import Interval


@dataclass(frozen=True)
class SharedFlag:
    shared: bool
    evidence: tuple[str, ...] = ()  # spawn-argument | global | heap-stored


@dataclass(frozen=True)
class ThreadsSet:
    count: int | None  # None: not a compile-time constant
    roots: tuple[str, ...] = ()

    @property
    def known(self) -> bool:
        return self.count is not None


def _pointers_in(a: StaticAnalysis, obj: AbsObj):
    for v in list(a.cells.get(obj, {}).values()) + list(a.star.get(obj, {}).values()):
        if isinstance(v, Ptr):
            yield from v.objs


def find_shared_objects(a: StaticAnalysis) -> dict[str, SharedFlag]:
    """Shared sites with the rules that made them shared."""
    p = a.p
    if not p.has_spawn():
        return {}
    evidence: dict[str, set[str]] = {}

    def mark(obj, why):
        if not obj.is_global:
            evidence.setdefault(obj.site, set()).add(why)

    # spawn arguments and everything reachable from them
    roots: list[tuple[AbsObj, str]] = []
    for fn, ctx in sorted(a.contexts):
        for label, i, ins in p.functions[fn].instructions():
            if ins.op != "spawn":
                continue
            for arg in ins.args:
                v = a.operand(fn, ctx, arg, label)
                if isinstance(v, Ptr):
                    roots += [(o, "spawn-argument") for o in v.objs]
    roots += [(o, "global") for o in a.objs if o.is_global]
    seen = set()
    stack = list(roots)
    while stack:
        obj, why = stack.pop()
        if (obj, why) in seen:
            continue
        seen.add((obj, why))
        mark(obj, why)
        for o in _pointers_in(a, obj):
            stack.append((o, why))
    # any alias held in heap memory
    for obj in list(a.cells) + list(a.star):
        if obj.is_global:
            continue
        for o in _pointers_in(a, obj):
            mark(o, "heap-stored")
    return {s: SharedFlag(True, tuple(sorted(ev))) for s, ev in sorted(evidence.items())}


def _call_closure(p, fn: str) -> set[str]:
    out = {fn}
    stack = [fn]
    while stack:
        f = stack.pop()
        for _, _, ins in p.functions[f].instructions():
            if ins.op == "call" and ins.callee not in out:
                out.add(ins.callee)
                stack.append(ins.callee)
    return out


def thread_count(a: StaticAnalysis, site: str, events: list[Event] | None = None) -> ThreadsSet:
    """Spawned threads whose code may touch the site.

    Constant loops around a spawn multiply; a spawn whose execution count is
    not constant makes the count unknown.
    """
    p = a.p
    touching = {ev.loc[0] for ev in (events or ())}
    if events is None:
        for (fn, _, _), v in a.vals.items():
            if fn != "$ret" and isinstance(v, Ptr) and any(o.site == site for o in v.objs):
                touching.add(fn)
    total = 0
    roots = []
    for r in a.counts.roots():
        if r == p.entry:
            continue
        if not _call_closure(p, r) & touching:
            continue
        roots.append(r)
        n = a.counts.root_instances(r)
        if n is None:
            return ThreadsSet(None, tuple(roots))
        total += n
    return ThreadsSet(total, tuple(roots))


SHARED_RELABEL = {
    "out-of-bounds": "shared-out-of-bounds",
    "non-constant-offset": "shared-out-of-bounds",
    "realloc-variable": "shared-realloc-variable",
}


def validate_shared(spatial_reasons: list[str], tset: ThreadsSet) -> list[str]:
    """Reasons of a shared site given its spatial reasons and thread count."""
    out = []
    for r in spatial_reasons:
        r = SHARED_RELABEL.get(r, r)
        if r not in out:
            out.append(r)
    if not tset.known:
        out.append("shared-unknown-threads")
    return out


def accumulated_index(a: StaticAnalysis, obj: AbsObj, off: int, tag: str = "ref") -> Interval | None:
    """Offsets a shared pointer cell may hold after all threads' increments."""
    v = a.cell_value(obj, off, tag)
    if not isinstance(v, Ptr):
        return None
    out = None
    for iv in v.objs.values():
        out = iv if out is None else out.join(iv)
    return out
