"""Inclusion-based points-to and value-range analysis over SSA.

The analysis is flow-insensitive and runs in two phases.

Phase A is a round-robin fixpoint over every reachable instruction.  Pointer
values map abstract objects to byte-offset intervals, integers are
intervals, and heap memory is a set of cells keyed by (offset, tag) plus one
"star" cell per tag for stores at unknown offsets.  Every read also yields
zero/null because fresh memory is zeroed.  Values that keep changing are
widened to the full range of their tag.

Phase B rebuilds the same flows as an explicit graph over SSA values and
memory cells (using phase A to resolve loads and stores) and evaluates it
SCC by SCC.  A cyclic SCC whose only internal steps are copies and
additions of an outside amount is bounded by
``entry + sum(amount * executions)``, where executions come from
``ExecCounts``.  This bounds counted loops, pointer walks and increments of
a shared pointer made by several threads.  The final value of every node is
the meet of both phases.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .hir import ExecCounts, HirProgram, build_indexes
from .hir.indexes import CFG, strongly_connected
from .hir.ir import Const, GlobalRef, Instr, Null, Var
from .hir.types import NamedType, PrimType, TypeExpr
from .intervals import INF, Interval

ZERO = Interval.const(0)


@dataclass(frozen=True, order=True)
class AbsObj:
    """Abstract heap object: an allocation site, its realloc version and clone tag."""

    site: str
    version: str = ""
    clone: str = ""

    @property
    def is_global(self) -> bool:
        return self.site.startswith("$")

    def __str__(self) -> str:
        s = self.site
        if self.version:
            s += f"#{self.version}"
        if self.clone:
            s += f"@{self.clone}"
        return s


def global_obj(name: str) -> AbsObj:
    return AbsObj("$" + name)


class Ptr:
    """A may-point-to set: abstract object -> byte offsets, plus a null flag."""

    __slots__ = ("objs", "null")

    def __init__(self, objs: dict | None = None, null: bool = False):
        self.objs: dict[AbsObj, Interval] = dict(objs or {})
        self.null = null

    def join(self, other: Ptr | None) -> Ptr:
        if other is None:
            return self
        objs = dict(self.objs)
        for o, iv in other.objs.items():
            objs[o] = iv.join(objs.get(o))
        return Ptr(objs, self.null or other.null)

    def meet(self, other: Ptr | None) -> Ptr | None:
        if other is None:
            return None
        objs = {}
        for o, iv in self.objs.items():
            if o in other.objs:
                m = iv.meet(other.objs[o])
                if m is not None:
                    objs[o] = m
        return Ptr(objs, self.null and other.null)

    def map(self, fn) -> Ptr:
        return Ptr({o: fn(iv) for o, iv in self.objs.items()}, self.null)

    def widen(self) -> Ptr:
        return Ptr({o: Interval.top() for o in self.objs}, self.null)

    def __eq__(self, other):
        return isinstance(other, Ptr) and self.objs == other.objs and self.null == other.null

    def __hash__(self):
        return hash((frozenset(self.objs.items()), self.null))

    def __repr__(self):
        inner = ", ".join(f"{o}:{iv}" for o, iv in sorted(self.objs.items()))
        return "{" + inner + (", null" if self.null else "") + "}"


def vjoin(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a.join(b)


def vmeet(a, b):
    """Refine ``a`` by ``b`` without ever dropping what ``a`` holds for sure."""
    if a is None or b is None:
        return a
    if isinstance(a, Ptr):
        if not isinstance(b, Ptr):
            return a
        objs = {}
        for o, iv in a.objs.items():
            m = iv.meet(b.objs[o]) if o in b.objs else None
            objs[o] = iv if m is None else m
        return Ptr(objs, a.null)
    m = a.meet(b)
    return a if m is None else m


@dataclass
class ObjInfo:
    obj: AbsObj
    size: Interval | None = None
    ty: TypeExpr | None = None
    loc: tuple | None = None
    # realloc versions: the objects this one was copied from
    prev: set = field(default_factory=set)
    typed_realloc: bool = False


def field_offset(table, ty: TypeExpr, name: str) -> tuple[int, TypeExpr]:
    td = table.lookup(ty.name)
    off = 0
    for fname, ft in table._members(td):
        if fname == name:
            return off, ft
        off += table.size(ft)
    raise KeyError(name)


def elem_size(p: HirProgram, view) -> int:
    return 1 if view is None else p.table.size(view)


def loc_str(fn: str, label: str, idx: int) -> str:
    return f"{fn}:{label}:{idx}"


class StaticAnalysis:
    """Points-to sets, integer ranges and memory cells for a whole program."""

    WIDEN_AFTER = 24

    def __init__(self, p: HirProgram, heap_clone: bool = False):
        self.p = p
        self.heap_clone = heap_clone
        self.idx = build_indexes(p)
        self.counts = ExecCounts(p, self.idx)
        self.refine = self._build_refinements()
        self.vals: dict = {}
        self.cells: dict[AbsObj, dict] = defaultdict(dict)
        self.star: dict[AbsObj, dict] = defaultdict(dict)
        self.objs: dict[AbsObj, ObjInfo] = {}
        self.contexts: set[tuple[str, str]] = set()
        self._updates: Counter = Counter()
        self._changed = False
        self._run_a()
        self._run_b()

    # -- helpers --------------------------------------------------------------
    def _build_refinements(self):
        out: dict[tuple[str, str], dict[str, Interval]] = defaultdict(dict)
        for fname, fi in self.idx.functions.items():
            for lp in fi.loops.values():
                bv = lp.body_values()
                if bv is None:
                    continue
                lo, hi, st = bv
                iv = Interval(lo, hi, st)
                for lab in lp.body:
                    if lab == lp.header:
                        continue
                    cur = out[(fname, lab)].get(lp.induction[0])
                    out[(fname, lab)][lp.induction[0]] = iv if cur is None else (cur.meet(iv) or iv)
        return out

    def callee_ctx(self, fn, label, idx, ctx) -> str:
        return loc_str(fn, label, idx) if self.heap_clone else ""

    def vtype(self, fn, name):
        return self.p.vtypes[fn][name]

    def info(self, obj: AbsObj) -> ObjInfo:
        if obj not in self.objs:
            self.objs[obj] = ObjInfo(obj)
        return self.objs[obj]

    def _put(self, key, val, tag="i64"):
        if val is None:
            return
        old = self.vals.get(key)
        new = vjoin(old, val)
        if isinstance(new, Interval):
            new = new.wrap(tag)
        if new != old:
            self._updates[key] += 1
            if self._updates[key] > self.WIDEN_AFTER:
                new = new.widen() if isinstance(new, Ptr) else Interval.of_tag(tag)
            if new != old:
                self.vals[key] = new
                self._changed = True

    def _cell_put(self, obj, key, val, tag):
        store = self.cells[obj] if isinstance(key, tuple) else self.star[obj]
        old = store.get(key)
        new = vjoin(old, val)
        if isinstance(new, Interval):
            new = new.wrap(tag)
        if new != old:
            ukey = ("cell", obj, key)
            self._updates[ukey] += 1
            if self._updates[ukey] > self.WIDEN_AFTER:
                new = new.widen() if isinstance(new, Ptr) else Interval.of_tag(tag)
            if new != old:
                store[key] = new
                self._changed = True

    def _refined(self, fn, label, name, val):
        r = self.refine.get((fn, label))
        if r and name in r and isinstance(val, Interval):
            m = val.meet(r[name])
            return m
        return val

    def operand(self, fn, ctx, op, label=None, vals=None):
        vals = self.vals if vals is None else vals
        if isinstance(op, Var):
            v = vals.get((fn, ctx, op.name))
            if label is not None and v is not None:
                v = self._refined(fn, label, op.name, v)
            return v
        if isinstance(op, Const):
            return Interval.const(op.value)
        if isinstance(op, Null):
            return Ptr(null=True)
        return Ptr({global_obj(op.name): ZERO})

    def zero_of(self, tag):
        return Ptr(null=True) if tag == "ref" else ZERO

    def read_cells(self, obj, offs: Interval, tag):
        out = self.zero_of(tag)
        cells = self.cells.get(obj, {})
        if offs.is_singleton:
            out = vjoin(out, cells.get((int(offs.lo), tag)))
        else:
            for (off, t), v in cells.items():
                if t == tag and offs.contains(off):
                    out = vjoin(out, v)
        return vjoin(out, self.star.get(obj, {}).get(tag))

    def cell_keys(self, obj, offs: Interval, tag):
        """Cells a load of ``tag`` at ``offs`` may read (star cell included)."""
        keys = []
        if offs.is_singleton:
            keys.append(("c", obj, int(offs.lo), tag))
        else:
            for off, t in list(self.cells.get(obj, {})):
                if t == tag and offs.contains(off):
                    keys.append(("c", obj, off, tag))
        keys.append(("s", obj, tag))
        return keys

    def store_key(self, obj, offs: Interval, tag):
        if offs.is_singleton:
            return ("c", obj, int(offs.lo), tag)
        return ("s", obj, tag)

    def access_offset(self, fn, ins: Instr):
        view = self.vtype(fn, ins.args[0].name).view if isinstance(ins.args[0], Var) else None
        if isinstance(ins.args[0], GlobalRef):
            view = self.p.globals[ins.args[0].name].ty
        return self.p.table.resolve_path(view, ins.path)

    def base_view(self, fn, op):
        if isinstance(op, Var):
            return self.vtype(fn, op.name).view
        if isinstance(op, GlobalRef):
            return self.p.globals[op.name].ty
        return None

    # -- phase A ----------------------------------------------------------------
    def _init_globals(self):
        for g in self.p.globals.values():
            obj = global_obj(g.name)
            inf = self.info(obj)
            inf.size = Interval.const(self.p.table.size(g.ty))
            inf.ty = g.ty
            if g.init is not None:
                self._init_value(obj, g.ty, g.init, 0, "@" + g.name)

    def _init_value(self, obj, ty, init, off, sid):
        if isinstance(init, dict):
            for fname, sub in init.items():
                foff, fty = field_offset(self.p.table, ty, fname)
                self._init_value(obj, fty, sub, off + foff, f"{sid}.{fname}")
            return
        if isinstance(init, Const):
            self._cell_put(obj, (off, ty.tag), Interval.const(init.value).wrap(ty.tag), ty.tag)
        elif isinstance(init, Null):
            self._cell_put(obj, (off, "ref"), Ptr(null=True), "ref")
        else:
            site = self.p.sites[sid]
            sobj = AbsObj(sid)
            inf = self.info(sobj)
            inf.size = site.size and Interval.const(site.size.value)
            inf.ty = site.ty
            self._cell_put(obj, (off, "ref"), Ptr({sobj: ZERO}), "ref")

    def _run_a(self):
        self._init_globals()
        main = self.p.functions[self.p.entry]
        self.contexts.add((main.name, ""))
        for prm in main.params:
            self._put((main.name, "", prm.name), Interval.of_tag(prm.ty.tag), prm.ty.tag)
        rounds = 0
        while True:
            self._changed = False
            for fn, ctx in sorted(self.contexts):
                self._visit(fn, ctx)
            rounds += 1
            if not self._changed:
                break
        self.rounds_a = rounds
        self.vals_a = dict(self.vals)

    def _visit(self, fname, ctx):
        f = self.p.functions[fname]
        fi = self.idx[fname]
        for b in f.blocks:
            if b.label not in fi.reachable:
                continue
            for i, ins in enumerate(b.instrs):
                self._transfer(fname, ctx, b.label, i, ins)

    def _dtag(self, fname, ins):
        return self.vtype(fname, ins.dest).tag if ins.dest else "i64"

    def _transfer(self, fn, ctx, label, i, ins: Instr):
        op = ins.op
        key = (fn, ctx, ins.dest)
        val = lambda o: self.operand(fn, ctx, o, label)  # noqa: E731
        if op == "alloc":
            site = self.p.sites[f"{fn}:{ins.dest}"]
            obj = AbsObj(site.site_id, "", ctx if self.heap_clone else "")
            size = Interval.const(site.size.value) if ins.ty is not None else val(ins.args[0])
            if size is None:
                return
            inf = self.info(obj)
            old = inf.size
            inf.size = size.join(inf.size)
            inf.ty = ins.ty
            inf.loc = (fn, label, i)
            self._changed |= inf.size != old
            self._put(key, Ptr({obj: ZERO}), "ref")
        elif op == "realloc":
            pv = val(ins.args[0])
            if ins.ty is not None:
                size = Interval.const(self.p.table.size(ins.ty))
            else:
                size = val(ins.args[1])
            if pv is None or size is None:
                return
            out = Ptr(null=False)
            for o in pv.objs:
                if o.is_global:
                    continue
                new = AbsObj(o.site, loc_str(fn, label, i), o.clone)
                inf = self.info(new)
                old = (inf.size, len(inf.prev))
                inf.size = size.join(inf.size)
                inf.ty = ins.ty
                inf.typed_realloc = ins.ty is not None
                inf.loc = (fn, label, i)
                inf.prev.add(o)
                self._changed |= (inf.size, len(inf.prev)) != old
                for ck, cv in list(self.cells.get(o, {}).items()):
                    self._cell_put(new, ck, cv, ck[1])
                for tag, cv in list(self.star.get(o, {}).items()):
                    self._cell_put(new, tag, cv, tag)
                out.objs[new] = ZERO
            if pv.null:
                out.null = True
            self._put(key, out, "ref")
        elif op == "gep":
            pv, k = val(ins.args[0]), val(ins.args[1])
            if pv is None or k is None:
                return
            es = elem_size(self.p, self.base_view(fn, ins.args[0]))
            d = k.scale(es)
            self._put(key, pv.map(lambda iv: iv + d), "ref")
        elif op == "cast":
            v = val(ins.args[0])
            if v is None:
                return
            if isinstance(v, Ptr):
                self._put(key, v, "ref")
            else:
                self._put(key, v.wrap(ins.ty.tag), ins.ty.tag)
        elif op == "load":
            pv = val(ins.args[0])
            if pv is None or not pv.objs:
                return
            po, prim = self.access_offset(fn, ins)
            out = None
            for o, offs in pv.objs.items():
                out = vjoin(out, self.read_cells(o, offs.shift(po), prim.tag))
            self._put(key, out, prim.tag)
        elif op == "store":
            pv, v = val(ins.args[0]), val(ins.args[1])
            if pv is None or v is None:
                return
            po, prim = self.access_offset(fn, ins)
            if isinstance(v, Interval):
                v = v.wrap(prim.tag)
            for o, offs in pv.objs.items():
                a = offs.shift(po)
                ck = (int(a.lo), prim.tag) if a.is_singleton else prim.tag
                self._cell_put(o, ck, v, prim.tag)
        elif op == "assign":
            self._put(key, val(ins.args[0]), self._dtag(fn, ins))
        elif op == "arith":
            a, b = val(ins.args[0]), val(ins.args[1])
            if a is None or b is None:
                return
            r = {"add": a + b, "sub": a - b, "mul": a * b}[ins.pred]
            self._put(key, r, self._dtag(fn, ins))
        elif op == "cmp":
            a, b = val(ins.args[0]), val(ins.args[1])
            if a is None or b is None:
                return
            self._put(key, cmp_interval(ins.pred, a, b), "i64")
        elif op in ("call", "spawn"):
            callee = self.p.functions[ins.callee]
            cctx = self.callee_ctx(fn, label, i, ctx)
            if (callee.name, cctx) not in self.contexts:
                self.contexts.add((callee.name, cctx))
                self._changed = True
            for prm, a in zip(callee.params, ins.args):
                tag = "ref" if not isinstance(prm.ty, PrimType) else prm.ty.tag
                self._put((callee.name, cctx, prm.name), val(a), tag)
            if op == "call" and ins.dest is not None:
                self._put(key, self.vals.get(("$ret", callee.name, cctx)), self._dtag(fn, ins))
        elif op == "ret":
            if ins.args:
                f = self.p.functions[fn]
                tag = f.ret.tag if isinstance(f.ret, PrimType) else "ref"
                self._put(("$ret", fn, ctx), val(ins.args[0]), tag)
        elif op == "gaddr":
            self._put(key, Ptr({global_obj(ins.args[0].name): ZERO}), "ref")
        elif op == "phi":
            out = None
            for lab, o in ins.incoming:
                if lab in self.idx[fn].reachable:
                    out = vjoin(out, self.operand(fn, ctx, o, lab))
            self._put(key, out, self._dtag(fn, ins))

    # -- phase B ----------------------------------------------------------------
    def _equations(self):
        """Value-flow equations: (kind, dst, srcs, data)."""
        eqs = []
        add = eqs.append
        vals = self.vals_a

        def vnode(fn, ctx, op):
            return ("v", fn, ctx, op.name) if isinstance(op, Var) else None

        def const_val(op):
            return self.operand("", "", op) if not isinstance(op, Var) else None

        for g in self.p.globals.values():
            obj = global_obj(g.name)
            for (off, tag), v in self.cells.get(obj, {}).items():
                add(("src", ("c", obj, off, tag), (), {"val": self._global_init_val(obj, off, tag)}))
        main = self.p.functions[self.p.entry]
        for prm in main.params:
            add(("src", ("v", main.name, "", prm.name), (), {"val": Interval.of_tag(prm.ty.tag)}))
        for fn, ctx in sorted(self.contexts):
            f = self.p.functions[fn]
            fi = self.idx[fn]
            for b in f.blocks:
                if b.label not in fi.reachable:
                    continue
                for i, ins in enumerate(b.instrs):
                    at = (fn, b.label, i)
                    dst = ("v", fn, ctx, ins.dest) if ins.dest else None
                    op = ins.op
                    tag = self._dtag(fn, ins)

                    def src_or_const(o):
                        n = vnode(fn, ctx, o)
                        return (n, None) if n else (None, const_val(o))

                    if op == "alloc":
                        add(("src", dst, (), {"val": vals.get((fn, ctx, ins.dest))}))
                    elif op == "realloc":
                        add(("src", dst, (), {"val": self.vals_a.get((fn, ctx, ins.dest))}))
                        pv = self.vals_a.get((fn, ctx, ins.args[0].name)) if isinstance(ins.args[0], Var) else None
                        for o in (pv.objs if pv else ()):
                            if o.is_global:
                                continue
                            new = AbsObj(o.site, loc_str(fn, b.label, i), o.clone)
                            for (off, t) in list(self.cells.get(o, {})):
                                add(("copy", ("c", new, off, t), (("c", o, off, t),), {}))
                            for t in list(self.star.get(o, {})):
                                add(("copy", ("s", new, t), (("s", o, t),), {}))
                    elif op == "gep":
                        base, _ = src_or_const(ins.args[0])
                        es = elem_size(self.p, self.base_view(fn, ins.args[0]))
                        kn, kc = src_or_const(ins.args[1])
                        if base is None:
                            add(("src", dst, (), {"val": self.vals_a.get((fn, ctx, ins.dest))}))
                        else:
                            add(("shift", dst, (base,), {"amt": kn, "amt_const": kc, "scale": es,
                                                          "at": at, "ctx": ctx, "ptr": True}))
                    elif op == "cast" or op == "assign":
                        n, c = src_or_const(ins.args[0])
                        wrap = ins.ty.tag if op == "cast" and isinstance(ins.ty, PrimType) and ins.ty.is_int else None
                        if n is None:
                            add(("src", dst, (), {"val": self.vals_a.get((fn, ctx, ins.dest))}))
                        else:
                            add(("copy", dst, (n,), {"wrap": wrap if wrap else (tag if tag != "ref" else None),
                                                      "at": at, "ctx": ctx}))
                    elif op == "load":
                        pv = self.operand(fn, ctx, ins.args[0], b.label, self.vals_a)
                        if pv is None:
                            continue
                        po, prim = self.access_offset(fn, ins)
                        srcs = []
                        for o, offs in pv.objs.items():
                            srcs.extend(self.cell_keys(o, offs.shift(po), prim.tag))
                        if not pv.objs:
                            continue
                        add(("src", dst, (), {"val": self.zero_of(prim.tag)}))
                        for s in srcs:
                            add(("copy", dst, (s,), {}))
                    elif op == "store":
                        pv = self.operand(fn, ctx, ins.args[0], b.label, self.vals_a)
                        if pv is None:
                            continue
                        po, prim = self.access_offset(fn, ins)
                        n, c = src_or_const(ins.args[1])
                        for o, offs in pv.objs.items():
                            ck = self.store_key(o, offs.shift(po), prim.tag)
                            if n is None:
                                cv = c.wrap(prim.tag) if isinstance(c, Interval) else c
                                add(("src", ck, (), {"val": cv}))
                            else:
                                add(("copy", ck, (n,), {"wrap": None if prim.tag == "ref" else prim.tag,
                                                        "at": at, "ctx": ctx}))
                    elif op == "arith":
                        a, b_ = ins.args
                        an, ac = src_or_const(a)
                        bn, bc = src_or_const(b_)
                        if ins.pred in ("add", "sub") and (an is not None or bn is not None):
                            add(("arith", dst, tuple(x for x in (an, bn) if x is not None),
                                 {"pred": ins.pred, "a": (an, ac), "b": (bn, bc), "at": at,
                                  "ctx": ctx, "tag": tag}))
                        else:
                            add(("fun", dst, tuple(x for x in (an, bn) if x is not None),
                                 {"pred": ins.pred, "a": (an, ac), "b": (bn, bc), "at": at,
                                  "ctx": ctx, "tag": tag}))
                    elif op == "cmp":
                        an, ac = src_or_const(ins.args[0])
                        bn, bc = src_or_const(ins.args[1])
                        add(("fun", dst, tuple(x for x in (an, bn) if x is not None),
                             {"pred": ins.pred, "a": (an, ac), "b": (bn, bc), "at": at,
                              "ctx": ctx, "tag": "i64", "cmp": True}))
                    elif op in ("call", "spawn"):
                        callee = self.p.functions[ins.callee]
                        cctx = self.callee_ctx(fn, b.label, i, ctx)
                        for prm, a in zip(callee.params, ins.args):
                            pn = ("v", callee.name, cctx, prm.name)
                            n, c = src_or_const(a)
                            if n is None:
                                add(("src", pn, (), {"val": c}))
                            else:
                                add(("copy", pn, (n,), {"at": at, "ctx": ctx}))
                        if op == "call" and dst is not None:
                            add(("copy", dst, (("r", callee.name, cctx),), {}))
                    elif op == "ret":
                        if ins.args:
                            n, c = src_or_const(ins.args[0])
                            rn = ("r", fn, ctx)
                            if n is None:
                                add(("src", rn, (), {"val": c}))
                            else:
                                add(("copy", rn, (n,), {"at": at, "ctx": ctx}))
                    elif op == "gaddr":
                        add(("src", dst, (), {"val": Ptr({global_obj(ins.args[0].name): ZERO})}))
                    elif op == "phi":
                        for lab, o in ins.incoming:
                            if lab not in fi.reachable:
                                continue
                            n, c = src_or_const(o)
                            if n is None:
                                add(("src", dst, (), {"val": c}))
                            else:
                                add(("copy", dst, (n,), {"at": (fn, lab, -1), "ctx": ctx}))
        return eqs

    def _global_init_val(self, obj, off, tag):
        g = self.p.globals[obj.site[1:]]
        v = self.zero_of(tag)
        found = self._find_init(g.ty, g.init, 0, off, tag, "@" + g.name)
        return vjoin(v, found)

    def _find_init(self, ty, init, base, off, tag, sid):
        if init is None:
            return None
        if isinstance(init, dict):
            for fname, sub in init.items():
                foff, fty = field_offset(self.p.table, ty, fname)
                r = self._find_init(fty, sub, base + foff, off, tag, f"{sid}.{fname}")
                if r is not None:
                    return r
            return None
        if base != off:
            return None
        if isinstance(init, Const) and tag != "ref":
            return Interval.const(init.value).wrap(tag)
        if isinstance(init, Null) and tag == "ref":
            return Ptr(null=True)
        if tag == "ref" and not isinstance(init, (Const, Null)):
            return Ptr({AbsObj(sid): ZERO})
        return None

    def _node_tag(self, node):
        if node[0] == "v":
            return self.vtype(node[1], node[3]).tag
        if node[0] == "c":
            return node[3]
        if node[0] == "s":
            return node[2]
        f = self.p.functions[node[1]]
        return f.ret.tag if isinstance(f.ret, PrimType) else "ref"

    def _a_value(self, node):
        if node[0] == "v":
            return self.vals_a.get((node[1], node[2], node[3]))
        if node[0] == "c":
            return self.cells.get(node[1], {}).get((node[2], node[3]))
        if node[0] == "s":
            return self.star.get(node[1], {}).get(node[2])
        return self.vals_a.get(("$ret", node[1], node[2]))

    def _run_b(self):
        eqs = self._equations()
        by_dst = defaultdict(list)
        succ = defaultdict(list)
        nodes = set()
        for eq in eqs:
            kind, dst, srcs, data = eq
            if dst is None:
                continue
            by_dst[dst].append(eq)
            nodes.add(dst)
            for s in srcs:
                nodes.add(s)
                succ[s].append(dst)
        order = sorted(nodes, key=repr)
        cfg = CFG(order, {n: succ[n] for n in order}, {n: [] for n in order})
        sccs = strongly_connected(cfg)
        bvals: dict = {}
        self.accumulated: dict = {}

        def get(node, at=None):
            v = bvals.get(node)
            if v is not None and at is not None and node[0] == "v" and at[2] is not None:
                v = self._refined(node[1], at[1], node[3], v)
            return v

        def opval(pair, at):
            n, c = pair
            return c if n is None else get(n, at)

        def eval_eq(eq):
            kind, dst, srcs, data = eq
            at = data.get("at")
            if kind == "src":
                return data["val"]
            if kind == "copy":
                v = get(srcs[0], at)
                if isinstance(v, Interval) and data.get("wrap"):
                    v = v.wrap(data["wrap"])
                return v
            if kind == "shift":
                base = get(srcs[0], at)
                k = get(data["amt"], at) if data["amt"] is not None else data["amt_const"]
                if base is None or k is None:
                    return None
                d = k.scale(data["scale"])
                return base.map(lambda iv: iv + d)
            a = opval(data["a"], at)
            b = opval(data["b"], at)
            if a is None or b is None:
                return None
            if data.get("cmp"):
                return cmp_interval(data["pred"], a, b)
            r = {"add": lambda: a + b, "sub": lambda: a - b, "mul": lambda: a * b}[data["pred"]]()
            return r.wrap(data["tag"])

        for comp in reversed(sccs):
            cyclic = len(comp) > 1 or any(n in succ[n] for n in comp)
            if not cyclic:
                (n,) = comp
                v = None
                for eq in by_dst[n]:
                    v = vjoin(v, eval_eq(eq))
                if isinstance(v, Interval):
                    v = v.wrap(self._node_tag(n))
                bvals[n] = v
                continue
            res = self._solve_cycle(comp, by_dst, eval_eq, get)
            for n in comp:
                bvals[n] = res.get(n) if res is not None else self._a_value(n)
        self.vals_b = bvals
        # final = meet of both phases
        final = {}
        for key, va in self.vals_a.items():
            if key[0] == "$ret":
                node = ("r", key[1], key[2])
            else:
                node = ("v",) + key
            final[key] = vmeet(va, bvals.get(node)) if node in bvals else va
        self.vals = final
        for obj, cells in self.cells.items():
            for (off, tag), va in list(cells.items()):
                b = bvals.get(("c", obj, off, tag))
                if b is not None:
                    cells[(off, tag)] = vmeet(va, b)
        for obj, stars in self.star.items():
            for tag, va in list(stars.items()):
                b = bvals.get(("s", obj, tag))
                if b is not None:
                    stars[tag] = vmeet(va, b)

    def _solve_cycle(self, comp, by_dst, eval_eq, get):
        entries = None
        amounts = []  # (Interval amount, count)
        any_ptr = any_int = False
        for n in comp:
            if self._node_tag(n) == "ref":
                any_ptr = True
            else:
                any_int = True
            for eq in by_dst[n]:
                kind, dst, srcs, data = eq
                inside = [s for s in srcs if s in comp]
                if not inside:
                    entries = vjoin(entries, eval_eq(eq))
                    continue
                if kind == "copy":
                    continue
                at = data.get("at")
                if kind == "shift":
                    if data["amt"] is not None and data["amt"] in comp:
                        return None
                    k = get(data["amt"], at) if data["amt"] is not None else data["amt_const"]
                    if k is None:
                        continue
                    amounts.append((k.scale(data["scale"]), at))
                    continue
                if kind == "arith":
                    (an, ac), (bn, bc) = data["a"], data["b"]
                    if an in comp and (bn is None or bn not in comp):
                        k = bc if bn is None else get(bn, at)
                    elif bn in comp and an not in comp and data["pred"] == "add":
                        k = ac if an is None else get(an, at)
                    else:
                        return None
                    if k is None:
                        continue
                    amounts.append((-k if data["pred"] == "sub" else k, at))
                    continue
                return None
        if any_ptr and any_int:
            return None
        if entries is None:
            return {n: None for n in comp}
        acc_lo, acc_hi = 0, 0
        strides = []
        for k, at in amounts:
            cnt = self.counts.instr_count(at[0], at[1])
            if cnt == 0:
                continue
            if cnt is None:
                cnt = INF
            if k.lo < 0:
                acc_lo += k.lo * cnt
            if k.hi > 0:
                acc_hi += k.hi * cnt
            strides += [k.lo if k.is_finite else 1, k.stride]
        acc = Interval(acc_lo, acc_hi)

        def grow(iv: Interval) -> Interval:
            r = iv + acc
            if r.is_finite and iv.is_finite:
                from .intervals import _gcd

                g = _gcd(iv.stride, *strides)
                r = Interval(r.lo, r.hi, g)
            return r

        if isinstance(entries, Ptr):
            val = entries.map(grow)
        else:
            val = grow(entries)
            for n in comp:
                if not val.within(*Interval.of_tag(self._node_tag(n)).to_json()):
                    return None
        for n in comp:
            self.accumulated[n] = (entries, acc)
        return {n: val for n in comp}

    # -- queries ------------------------------------------------------------------
    def value(self, fn: str, name: str, ctx: str | None = None):
        """Final value of an SSA name, joined over contexts unless ``ctx`` is given."""
        out = None
        for (f, c, n), v in self.vals.items():
            if f == fn and n == name and (ctx is None or c == ctx):
                out = vjoin(out, v)
        return out

    def value_at(self, fn, ctx, op, label):
        return self.operand(fn, ctx, op, label)

    def contexts_of(self, fn: str) -> list[str]:
        return sorted(c for f, c in self.contexts if f == fn)

    def cell_value(self, obj: AbsObj, off: int, tag: str):
        return self.read_cells(obj, Interval.const(off), tag)

    def site_objects(self, site: str) -> list[AbsObj]:
        return sorted(o for o in self.objs if o.site == site)


def cmp_interval(pred, a, b) -> Interval:
    if isinstance(a, Ptr) or isinstance(b, Ptr):
        return Interval(0, 1)
    res = _decide(pred, a, b)
    return Interval(0, 1) if res is None else Interval.const(int(res))


def _decide(pred, a: Interval, b: Interval):
    if pred == "lt":
        if a.hi < b.lo:
            return True
        if a.lo >= b.hi:
            return False
    elif pred == "le":
        if a.hi <= b.lo:
            return True
        if a.lo > b.hi:
            return False
    elif pred == "gt":
        return _decide("lt", b, a)
    elif pred == "ge":
        return _decide("le", b, a)
    elif pred == "eq":
        if a.is_singleton and b.is_singleton:
            return a.lo == b.lo
        if a.meet(b) is None:
            return False
    elif pred == "ne":
        r = _decide("eq", a, b)
        return None if r is None else not r
    return None


# ---------------------------------------------------------------------------
# Points-to map facade


@dataclass
class PointsToMap:
    """Value -> sites and site -> values views of a static analysis."""

    analysis: StaticAnalysis
    value_sites: dict[tuple[str, str], set[tuple[str, str]]]
    site_values: dict[str, set[tuple[str, str]]]

    def sites_of(self, fn: str, name: str) -> set[str]:
        return {s for s, _ in self.value_sites.get((fn, name), ())}

    def to_json(self) -> str:
        vs = {f"{f}:{n}": sorted(f"{s}" + (f"@{c}" if c else "") for s, c in v)
              for (f, n), v in sorted(self.value_sites.items())}
        sv = {s: sorted(f"{f}:{n}" for f, n in v) for s, v in sorted(self.site_values.items())}
        return json.dumps({"values": vs, "sites": sv}, indent=2, sort_keys=True)


def compute_points_to(p: HirProgram, heap_clone: bool = False,
                      analysis: StaticAnalysis | None = None) -> PointsToMap:
    a = analysis or StaticAnalysis(p, heap_clone)
    value_sites: dict = defaultdict(set)
    site_values: dict = defaultdict(set)
    for (fn, ctx, name), v in a.vals.items():
        if fn == "$ret" or not isinstance(v, Ptr):
            continue
        for o in v.objs:
            if o.is_global:
                continue
            value_sites[(fn, name)].add((o.site, o.clone))
            site_values[o.site].add((fn, name))
    return PointsToMap(a, dict(value_sites), dict(site_values))


def classify_alias_region(p: HirProgram, fn: str, name: str, pmap: PointsToMap) -> str:
    """``global`` if the value is read from a global cell, ``heap`` if read from
    a heap object, ``stack`` for any other function-local SSA value."""
    f = p.functions[fn]
    for _, _, ins in f.instructions():
        if ins.dest != name:
            continue
        if ins.op != "load":
            return "stack"
        base = pmap.analysis.value(fn, ins.args[0].name) if isinstance(ins.args[0], Var) else None
        if isinstance(ins.args[0], GlobalRef):
            return "global"
        if base is not None and base.objs and all(o.is_global for o in base.objs):
            return "global"
        return "heap"
    return "stack"


def global_alias_class(p: HirProgram, ty: TypeExpr) -> str | None:
    """(a) singleton ref, (b) compound of primitive fields, (c) nested; None if no refs."""
    flat = p.table.flat(ty)
    if not any(t == "ref" for _, t in flat):
        return None
    if isinstance(ty, PrimType):
        return "a"
    if isinstance(ty, NamedType):
        members = p.table._members(p.table.lookup(ty.name))
        if all(isinstance(ft, PrimType) for _, ft in members):
            return "b"
    return "c"


def _initialized_refs(p: HirProgram, g) -> set[int]:
    """Offsets of ref cells given a value by the global's declaration."""
    out: set[int] = set()

    def walk(ty, init, base):
        if init is None:
            return
        if isinstance(init, dict):
            for fname, sub in init.items():
                foff, fty = field_offset(p.table, ty, fname)
                walk(fty, sub, base + foff)
        elif not isinstance(init, Const):
            out.add(base)

    walk(g.ty, g.init, 0)
    return out


def validate_global_aliases(p: HirProgram, pmap: PointsToMap) -> dict[str, set[str]]:
    """Sites that must be unsafe because a global alias may reach them."""
    a = pmap.analysis
    flagged: dict[str, set[str]] = defaultdict(set)
    for g in p.globals.values():
        cls = global_alias_class(p, g.ty)
        if cls is None:
            continue
        gobj = global_obj(g.name)
        init = _initialized_refs(p, g)
        ref_offs = [o for o, t in p.table.flat(g.ty) if t == "ref"]
        for off in ref_offs:
            v = a.cells.get(gobj, {}).get((off, "ref"))
            v = vjoin(v, a.star.get(gobj, {}).get("ref"))
            if v is None:
                continue
            ok = cls in ("a", "b") and off in init
            if ok:
                continue
            for o in v.objs:
                if not o.is_global:
                    flagged[o.site].add("global-alias")
    return dict(flagged)
