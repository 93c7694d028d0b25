"""Memory events on abstract objects, shared by the static validators and symexec."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .alias import AbsObj, Ptr, StaticAnalysis, elem_size, loc_str
from .hir.ir import GlobalRef, Var
from .hir.types import TypeExpr
from .intervals import Interval


@dataclass(frozen=True)
class Event:
    kind: str  # gep | access | free | realloc | cast | intcast
    loc: tuple  # (fn, label, index)
    obj: AbsObj
    offs: Interval | None = None  # byte offsets of the pointer operand
    amount: Interval | None = None  # gep operand, in elements
    scale: int = 1
    path_off: int = 0
    tag: str | None = None
    size: int = 0
    store: bool = False
    new_obj: AbsObj | None = None
    new_size: Interval | None = None
    new_ty: TypeExpr | None = None
    from_view: TypeExpr | None = None
    to_view: TypeExpr | None = None
    value: Interval | None = None
    from_tag: str | None = None
    to_tag: str | None = None
    result: Interval | None = None  # gep: offsets of the result, when known

    @property
    def key(self):
        return (self.kind, self.loc, self.obj)

    def merge(self, other: Event) -> Event:
        def j(a, b):
            return b if a is None else a.join(b)

        return replace(
            self,
            offs=j(self.offs, other.offs),
            amount=j(self.amount, other.amount),
            new_size=j(self.new_size, other.new_size),
            result=None if self.result is None or other.result is None else self.result.join(other.result),
            value=j(self.value, other.value),
        )

    @property
    def where(self) -> str:
        return loc_str(*self.loc)


def base_view(p, fn, op):
    if isinstance(op, Var):
        return p.vtypes[fn][op.name].view
    if isinstance(op, GlobalRef):
        return p.globals[op.name].ty
    return None


def instr_events(p, fn, label, i, ins, operand, alloc_new=None, loaded_from=None,
                 result=None) -> list[Event]:
    """Events of one instruction, given an ``operand(op)`` evaluator.

    ``operand`` returns an Interval for integers and a mapping-like pointer
    value exposing ``objs``.  ``alloc_new(obj)`` names the object a realloc
    of ``obj`` produces; ``loaded_from`` gives the objects an integer operand
    of an integer cast was read from.  ``result`` is the already known value
    of a gep's destination, used to tighten its offsets.
    """
    at = (fn, label, i)
    op = ins.op
    out: list[Event] = []
    if op == "gep":
        pv, k = operand(ins.args[0]), operand(ins.args[1])
        if pv is None or k is None:
            return out
        es = elem_size(p, base_view(p, fn, ins.args[0]))
        for o, offs in pv.objs.items():
            res = result.objs.get(o) if result is not None else None
            out.append(Event("gep", at, o, offs, amount=k, scale=es, result=res))
    elif op in ("load", "store"):
        pv = operand(ins.args[0])
        if pv is None:
            return out
        po, prim = p.table.resolve_path(base_view(p, fn, ins.args[0]), ins.path)
        for o, offs in pv.objs.items():
            out.append(Event("access", at, o, offs, path_off=po, tag=prim.tag,
                             size=prim.size, store=op == "store"))
    elif op == "free":
        pv = operand(ins.args[0])
        if pv is None:
            return out
        for o, offs in pv.objs.items():
            out.append(Event("free", at, o, offs))
    elif op == "realloc":
        pv = operand(ins.args[0])
        if ins.ty is not None:
            size = Interval.const(p.table.size(ins.ty))
        else:
            size = operand(ins.args[1])
        if pv is None or size is None:
            return out
        for o, offs in pv.objs.items():
            new = alloc_new(o) if alloc_new else None
            out.append(Event("realloc", at, o, offs, new_obj=new, new_size=size, new_ty=ins.ty))
    elif op == "cast":
        v = operand(ins.args[0])
        if v is None:
            return out
        if isinstance(v, Interval):
            src_tag = p.vtypes[fn][ins.args[0].name].tag if isinstance(ins.args[0], Var) else "i64"
            for o in (loaded_from or ()):
                out.append(Event("intcast", at, o, value=v, from_tag=src_tag, to_tag=ins.ty.tag))
            return out
        src_view = base_view(p, fn, ins.args[0])
        for o, offs in v.objs.items():
            out.append(Event("cast", at, o, offs, from_view=src_view,
                             to_view=None if ins.opaque else ins.ty))
    return out


def load_sources(p, a: StaticAnalysis, fn, op, seen=None) -> set[AbsObj]:
    """Objects an integer operand may have been read from (through assigns and casts)."""
    if not isinstance(op, Var):
        return set()
    seen = seen or set()
    if op.name in seen:
        return set()
    seen.add(op.name)
    f = p.functions[fn]
    for _, _, ins in f.instructions():
        if ins.dest != op.name:
            continue
        if ins.op == "load":
            pv = a.value(fn, ins.args[0].name) if isinstance(ins.args[0], Var) else None
            if isinstance(ins.args[0], GlobalRef):
                from .alias import global_obj

                return {global_obj(ins.args[0].name)}
            return set(pv.objs) if isinstance(pv, Ptr) else set()
        if ins.op in ("assign", "cast"):
            return load_sources(p, a, fn, ins.args[0], seen)
        if ins.op == "phi":
            out = set()
            for _, v in ins.incoming:
                out |= load_sources(p, a, fn, v, seen)
            return out
        return set()
    return set()


def collect_static_events(a: StaticAnalysis) -> dict[tuple, Event]:
    """All events of all reachable instructions, merged over calling contexts."""
    p = a.p
    events: dict[tuple, Event] = {}
    intcast_src = {}
    for fn, ctx in sorted(a.contexts):
        f = p.functions[fn]
        fi = a.idx[fn]
        for b in f.blocks:
            if b.label not in fi.reachable:
                continue
            for i, ins in enumerate(b.instrs):
                if ins.op not in ("gep", "load", "store", "free", "realloc", "cast"):
                    continue

                def operand(o, _fn=fn, _ctx=ctx, _lab=b.label):
                    return a.operand(_fn, _ctx, o, _lab)

                src = None
                if ins.op == "cast" and not p.vtypes[fn][ins.dest].is_ref:
                    key = (fn, ins.args[0].name if isinstance(ins.args[0], Var) else None)
                    if key not in intcast_src:
                        intcast_src[key] = load_sources(p, a, fn, ins.args[0])
                    src = intcast_src[key]

                def alloc_new(o, _at=(fn, b.label, i)):
                    return AbsObj(o.site, loc_str(*_at), o.clone)

                res = a.operand(fn, ctx, Var(ins.dest), b.label) if ins.op == "gep" else None
                for ev in instr_events(p, fn, b.label, i, ins, operand, alloc_new, src, res):
                    if ev.key in events:
                        events[ev.key] = events[ev.key].merge(ev)
                    else:
                        events[ev.key] = ev
    return events


def events_by_site(events) -> dict[str, list[Event]]:
    out: dict[str, list[Event]] = {}
    for key in sorted(events, key=lambda k: (k[2], k[1], k[0])):
        ev = events[key]
        out.setdefault(ev.obj.site, []).append(ev)
    return out

