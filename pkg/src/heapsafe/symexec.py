"""Bounded path exploration that clears statically unsafe sites.

The static validators merge all paths, so a violation that only happens on
an infeasible path (a guarded downcast, an index checked before use) still
makes a site unsafe.  This module re-runs the checks along individual
paths.  Integers are tracked as small value sets or intervals and branch
conditions narrow them; objects allocated on the path have exact contents
until they escape to memory other code can reach, after which they fall
back to the static cells.

Exploration starts at ``main`` and, separately, at every spawned function
(whose arguments take their static values).  A loop may be iterated
``unroll`` times; the next back edge replaces everything defined in the
loop with its static value and makes all path memory escape, and a
further back edge ends the path, since the static values already cover
every later iteration.  Hitting the call depth, the path count or the step
limit abandons the refinement for the whole program.

A site becomes Safe only when every reason it was flagged for can be
re-checked along paths (structural reasons such as a non-constant size
cannot), no explored path violates anything, and it has a concrete type.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace

from .alias import AbsObj, Ptr, elem_size, global_obj, loc_str
from .classifier import STRUCTURAL, SiteVerdict, StaticResult
from .events import Event, instr_events, load_sources
from .hir.ir import Const, GlobalRef, HirProgram, Null, Var
from .hir.types import int_range, wrap_int
from .intervals import INF, Interval
from .spatial import check_event
from .typecheck import check_type_event, realloc_type_transition, resolve_delayed_type

MAX_SET = 16


class BudgetExhausted(Exception):
    """An exploration budget ran out; no conclusion may be drawn."""


@dataclass(frozen=True)
class ExplorationBudget:
    depth: int = 4
    unroll: int = 2
    paths: int = 4096
    steps: int = 200_000


# -- symbolic integers: small sets or intervals -------------------------------------


def si(x):
    """Normal form: a frozenset when at most MAX_SET values, else an Interval."""
    if isinstance(x, frozenset):
        if len(x) <= MAX_SET:
            return x
        return _hull(x)
    if isinstance(x, Interval) and x.is_finite and x.count() <= MAX_SET:
        return frozenset(x.values())
    return x


def _hull(vals) -> Interval:
    out = None
    for v in vals:
        iv = Interval.const(v)
        out = iv if out is None else out.join(iv)
    return out


def si_iv(x) -> Interval:
    return _hull(x) if isinstance(x, frozenset) else x


def si_const(x):
    if isinstance(x, frozenset) and len(x) == 1:
        return next(iter(x))
    if isinstance(x, Interval) and x.is_singleton:
        return int(x.lo)
    return None


def si_join(a, b):
    if a is None:
        return b
    if b is None:
        return a
    if isinstance(a, frozenset) and isinstance(b, frozenset):
        return si(a | b)
    return si(si_iv(a).join(si_iv(b)))


def si_binop(op, a, b, tag):
    if isinstance(a, frozenset) and isinstance(b, frozenset) and len(a) * len(b) <= 4 * MAX_SET:
        f = {"add": lambda x, y: x + y, "sub": lambda x, y: x - y, "mul": lambda x, y: x * y}[op]
        return si(frozenset(wrap_int(f(x, y), tag) for x in a for y in b))
    ia, ib = si_iv(a), si_iv(b)
    r = ia + ib if op == "add" else ia - ib if op == "sub" else ia * ib
    return si(r.wrap(tag))


def si_wrap(x, tag):
    if isinstance(x, frozenset):
        return si(frozenset(wrap_int(v, tag) for v in x))
    return si(x.wrap(tag))


def _fits(x, tag) -> bool:
    lo, hi = int_range(tag)
    iv = si_iv(x)
    return iv.lo >= lo and iv.hi <= hi


NEGATE = {"lt": "ge", "ge": "lt", "le": "gt", "gt": "le", "eq": "ne", "ne": "eq"}
SWAP = {"lt": "gt", "gt": "lt", "le": "ge", "ge": "le", "eq": "eq", "ne": "ne"}


def si_refine(x, pred, y):
    """Values of ``x`` for which ``x pred v`` holds for some ``v`` in ``y``; None if none."""
    yi = si_iv(y)
    if isinstance(x, frozenset):
        if pred == "eq":
            keep = {v for v in x if (v in y if isinstance(y, frozenset) else yi.contains(v))}
        elif pred == "ne":
            c = si_const(y)
            keep = {v for v in x if v != c} if c is not None else set(x)
        elif pred == "lt":
            keep = {v for v in x if v < yi.hi}
        elif pred == "le":
            keep = {v for v in x if v <= yi.hi}
        elif pred == "gt":
            keep = {v for v in x if v > yi.lo}
        else:
            keep = {v for v in x if v >= yi.lo}
        return frozenset(keep) if keep else None
    if pred == "eq":
        if isinstance(y, frozenset):
            keep = frozenset(v for v in y if x.contains(v))
            return keep or None
        m = x.meet(yi)
        return None if m is None else si(m)
    if pred == "ne":
        c = si_const(y)
        if c is None:
            return x
        if x.is_singleton and x.lo == c:
            return None
        if x.lo == c:
            return si(Interval(c + (x.stride or 1), x.hi, x.stride))
        if x.hi == c:
            return si(Interval(x.lo, c - (x.stride or 1), x.stride))
        return x
    bound = {"lt": Interval(-INF, yi.hi - 1), "le": Interval(-INF, yi.hi),
             "gt": Interval(yi.lo + 1, INF), "ge": Interval(yi.lo, INF)}[pred]
    m = x.meet(bound)
    return None if m is None else si(m)


# -- path conditions -------------------------------------------------------------------


@dataclass(frozen=True)
class PathCondition:
    """A conjunction of comparisons ``lhs pred rhs`` over integer names.

    ``rhs`` is a name or an integer constant; ``equations`` hold ``x = y + c``
    facts that link names across arithmetic.
    """

    constraints: tuple = ()
    equations: tuple = ()

    def add(self, lhs, pred, rhs) -> PathCondition:
        return replace(self, constraints=self.constraints + ((lhs, pred, rhs),))

    def link(self, x, y, c) -> PathCondition:
        return replace(self, equations=self.equations + ((x, y, c),))

    def __str__(self) -> str:
        sym = {"lt": "<", "le": "<=", "gt": ">", "ge": ">=", "eq": "==", "ne": "!="}
        return "{" + ", ".join(f"{a}{sym[p]}{b}" for a, p, b in self.constraints) + "}"

    def domains(self, initial: dict | None = None) -> dict | None:
        """Narrowed value sets of every name, or None when some set is empty."""
        dom = dict(initial or {})
        top = Interval.top()

        def get(v):
            if isinstance(v, int):
                return frozenset({v})
            return dom.get(v, top)

        for _ in range(16):
            changed = False
            for a, pred, b in self.constraints:
                na = si_refine(get(a), pred, get(b))
                if na is None:
                    return None
                if not isinstance(a, int) and na != get(a):
                    dom[a], changed = na, True
                nb = si_refine(get(b), SWAP[pred], get(a))
                if nb is None:
                    return None
                if not isinstance(b, int) and nb != get(b):
                    dom[b], changed = nb, True
            for x, y, c in self.equations:
                nx = si_refine(get(x), "eq", si_binop("add", get(y), frozenset({c}), "i64"))
                ny = si_refine(get(y), "eq", si_binop("sub", get(x), frozenset({c}), "i64"))
                if nx is None or ny is None:
                    return None
                if nx != get(x):
                    dom[x], changed = nx, True
                if ny != get(y):
                    dom[y], changed = ny, True
            if not changed:
                break
        return dom


def is_feasible(pc: PathCondition, initial: dict | None = None) -> bool:
    """False only when interval and set propagation empties some name."""
    return pc.domains(initial) is not None


def _cond_of(f, name):
    for _, _, ins in f.instructions():
        if ins.dest == name and ins.op == "cmp":
            return ins
    return None


def _term(op, prefix):
    if isinstance(op, Const):
        return op.value
    if isinstance(op, Var):
        return prefix + op.name
    return None


def enumerate_paths(p: HirProgram, fn: str, src: str, dst: str,
                    budget: ExplorationBudget | None = None) -> list[PathCondition]:
    """Branch conditions of every block path from ``src`` to ``dst`` in ``fn``.

    Loops are followed at most ``budget.unroll`` times per header and calls
    are expanded into their own paths up to ``budget.depth`` levels deep.
    Raises BudgetExhausted past the depth or path budget.
    """
    budget = budget or ExplorationBudget()
    from .hir.indexes import build_indexes

    idx = build_indexes(p)
    out: list[PathCondition] = []

    def callee_paths(name, depth):
        if depth > budget.depth:
            raise BudgetExhausted(f"call depth above {budget.depth}")
        f = p.functions[name]
        ends = [b.label for b in f.blocks if b.terminator.op == "ret" and b.label in idx[name].reachable]
        res = []
        for e in ends:
            res += walk(name, f.entry.label, e, depth, f"{name}.")
        return res

    def walk(name, start, end, depth, prefix):
        f = p.functions[name]
        fi = idx[name]
        results: list[PathCondition] = []
        stack = [(start, PathCondition(), {})]
        while stack:
            label, pc, counts = stack.pop()
            block = f.block(label)
            pcs = [pc]
            for ins in block.instrs:
                if ins.op == "call":
                    subs = callee_paths(ins.callee, depth + 1)
                    pcs = [PathCondition(a.constraints + s.constraints, a.equations + s.equations)
                           for a in pcs for s in subs]
                    if len(pcs) > budget.paths:
                        raise BudgetExhausted("too many paths")
            if label == end:
                results.extend(pcs)
                if len(results) + len(out) > budget.paths:
                    raise BudgetExhausted("too many paths")
                continue
            term = block.terminator
            succs = []
            if term.op == "jmp":
                succs = [(term.labels[0], None)]
            elif term.op == "br":
                cmp = _cond_of(f, term.args[0].name) if isinstance(term.args[0], Var) else None
                for k, lab in enumerate(term.labels):
                    cond = None
                    if cmp is not None:
                        a, b = _term(cmp.args[0], prefix), _term(cmp.args[1], prefix)
                        if a is not None and b is not None:
                            cond = (a, cmp.pred if k == 0 else NEGATE[cmp.pred], b)
                    succs.append((lab, cond))
            for lab, cond in reversed(succs):
                c = dict(counts)
                if lab in fi.loops and label in fi.loops[lab].body:
                    c[lab] = c.get(lab, 0) + 1
                    if c[lab] > budget.unroll:
                        continue
                for pc2 in pcs:
                    stack.append((lab, pc2.add(*cond) if cond else pc2, c))
        return results

    out = walk(fn, src, dst, 0, "")
    return out


# -- symbolic pointers and state ------------------------------------------------------------


class SymPtr:
    __slots__ = ("targets", "null")

    def __init__(self, targets=None, null=False):
        self.targets: dict = dict(targets or {})  # ("p", id) | ("s", AbsObj) -> offsets
        self.null = null

    def join(self, other):
        t = dict(self.targets)
        for k, v in other.targets.items():
            t[k] = si_join(t.get(k), v)
        return SymPtr(t, self.null or other.null)

    def __eq__(self, other):
        return isinstance(other, SymPtr) and self.targets == other.targets and self.null == other.null

    def __repr__(self):
        return f"SymPtr({self.targets}, null={self.null})"


def vjoin(a, b):
    if a is None:
        return b
    if b is None:
        return a
    if isinstance(a, SymPtr):
        return a.join(b)
    return si_join(a, b)


ZERO = frozenset({0})


@dataclass
class PObj:
    aobj: AbsObj
    size: object  # symbolic int
    ty: object  # TypeExpr or None (not yet typed)
    cells: dict = field(default_factory=dict)  # (off, tag) -> (value, version)
    escaped: bool = False
    freed: bool = False


@dataclass
class Frame:
    fn: str
    ctx: str
    fid: int
    block: str = ""
    idx: int = 0
    env: dict = field(default_factory=dict)
    stamp: dict = field(default_factory=dict)  # name -> definition counter
    ret_dest: str | None = None
    depth: int = 0
    loops: dict = field(default_factory=dict)  # header -> back edges taken


@dataclass
class State:
    frames: list
    objs: dict
    eqs: list = field(default_factory=list)  # (x_key, y_key, c, stamps)
    conds: dict = field(default_factory=dict)  # (fid, name) -> (pred, a, b, stamps)
    loads: dict = field(default_factory=dict)  # (fid, name) -> (obj id, off, tag, version, stamp)
    next_id: int = 0
    tick: int = 0


class _Limit(Exception):
    pass


class _EvPtr:
    """Pointer view handed to the shared event builder."""

    __slots__ = ("objs",)

    def __init__(self, objs):
        self.objs = objs


# -- the explorer --------------------------------------------------------------------------


class Explorer:
    def __init__(self, p: HirProgram, st: StaticResult, budget: ExplorationBudget,
                 depth: int | None = None, unroll: int | None = None):
        self.p = p
        self.st = st
        self.a = st.analysis
        self.budget = budget
        self.depth = budget.depth if depth is None else depth
        self.unroll = budget.unroll if unroll is None else unroll
        self.spawns = p.has_spawn()
        self.violations: dict[str, set[str]] = {}
        self.views: dict[str, set] = {}
        self.pending: dict[str, list] = {}
        self.hit_depth = False
        self.hit_unroll = False
        self.exhausted = False
        self.paths = 0
        self.steps = 0
        self._fid = 0
        self._srcs: dict = {}
        self._defs = {}
        for f in p.functions.values():
            fi = self.a.idx[f.name]
            for lp in fi.loops.values():
                names = []
                for lab in sorted(lp.body):
                    for ins in f.block(lab).instrs:
                        if ins.dest is not None:
                            names.append((lab, ins.dest))
                self._defs[(f.name, lp.header)] = names

    # -- driver ----------------------------------------------------------------
    def run(self):
        try:
            for state in self._roots():
                stack = [state]
                while stack:
                    self._exec(stack.pop(), stack)
        except _Limit:
            self.exhausted = True
        return self

    def _new_fid(self):
        self._fid += 1
        return self._fid

    def _roots(self):
        p = self.p
        main = p.functions[p.entry]
        st = State([], {})
        if not self.spawns:
            st.globals = {}
            for g in sorted(p.globals):
                gid = self._new_obj(st, global_obj(g), frozenset({p.table.size(p.globals[g].ty)}), p.globals[g].ty)
                self._init_global(st, gid, p.globals[g].ty, p.globals[g].init, 0, "@" + g)
                st.globals[g] = gid
        fr = Frame(main.name, "", self._new_fid(), main.entry.label)
        for prm in main.params:
            fr.env[prm.name] = si(Interval(prm.lo, prm.hi))
            fr.stamp[prm.name] = 0
        st.frames.append(fr)
        self._enter(st, fr, None)
        yield st
        for root in self.a.counts.roots():
            if root == p.entry:
                continue
            f = p.functions[root]
            for ctx in self.a.contexts_of(root):
                s = State([], {})
                rf = Frame(root, ctx, self._new_fid(), f.entry.label)
                for prm in f.params:
                    rf.env[prm.name] = self._from_static(self.a.operand(root, ctx, Var(prm.name)))
                    rf.stamp[prm.name] = 0
                s.frames.append(rf)
                self._enter(s, rf, None)
                yield s

    def _init_global(self, st, gid, ty, init, off, sid):
        from .alias import field_offset

        if init is None:
            return
        if isinstance(init, dict):
            for fname, sub in init.items():
                foff, fty = field_offset(self.p.table, ty, fname)
                self._init_global(st, gid, fty, sub, off + foff, f"{sid}.{fname}")
            return
        o = st.objs[gid]
        if isinstance(init, Const):
            o.cells[(off, ty.tag)] = (frozenset({wrap_int(init.value, ty.tag)}), 0)
        elif isinstance(init, Null):
            o.cells[(off, "ref")] = (SymPtr(null=True), 0)
        else:
            site = self.p.sites[sid]
            size = self.p.table.size(site.ty) if site.ty is not None else site.size.value
            facts = self.st.facts.get(sid)
            nid = self._new_obj(st, AbsObj(sid), frozenset({size}), facts.ty if facts else None)
            o.cells[(off, "ref")] = (SymPtr({("p", nid): ZERO}), 0)

    def _new_obj(self, st, aobj, size, ty):
        st.next_id += 1
        st.objs[st.next_id] = PObj(aobj, size, ty)
        return st.next_id

    # -- values ------------------------------------------------------------------
    def _from_static(self, v):
        if v is None:
            return None
        if isinstance(v, Ptr):
            return SymPtr({("s", o): si(iv) for o, iv in v.objs.items()}, v.null)
        return si(v)

    def _val(self, st, fr, op):
        if isinstance(op, Var):
            return fr.env.get(op.name)
        if isinstance(op, Const):
            return frozenset({op.value})
        if isinstance(op, Null):
            return SymPtr(null=True)
        if self.spawns:
            return SymPtr({("s", global_obj(op.name)): ZERO})
        return SymPtr({("p", st.globals[op.name]): ZERO})

    def _set(self, st, fr, name, v):
        st.tick += 1
        fr.env[name] = v
        fr.stamp[name] = st.tick

    def _aobj(self, st, target):
        return st.objs[target[1]].aobj if target[0] == "p" else target[1]

    def _ev_view(self, st, v):
        if isinstance(v, SymPtr):
            objs = {}
            for t, offs in v.targets.items():
                o = self._aobj(st, t)
                iv = si_iv(offs)
                objs[o] = iv if o not in objs else objs[o].join(iv)
            return _EvPtr(objs)
        if v is None:
            return None
        return si_iv(v)

    # -- escape --------------------------------------------------------------------
    def _escape_value(self, st, v):
        if isinstance(v, SymPtr):
            for t in v.targets:
                if t[0] == "p":
                    self._escape(st, t[1])

    def _escape(self, st, oid):
        o = st.objs[oid]
        if o.escaped:
            return
        o.escaped = True
        for val, _ in list(o.cells.values()):
            self._escape_value(st, val)

    # -- memory ----------------------------------------------------------------------
    def _read(self, st, target, offs, tag):
        zero = SymPtr(null=True) if tag == "ref" else ZERO
        if target[0] == "s" or st.objs[target[1]].escaped:
            return self._from_static(self.a.read_cells(self._aobj(st, target), si_iv(offs), tag))
        o = st.objs[target[1]]
        out = None
        if isinstance(offs, frozenset):
            for off in offs:
                c = o.cells.get((off, tag))
                out = vjoin(out, zero if c is None else c[0])
            return out
        out = zero
        for (off, t), (val, _) in o.cells.items():
            if t == tag and offs.contains(off):
                out = vjoin(out, val)
        return out

    def _write(self, st, ptr, offs_fn, tag, size, v):
        single = len(ptr.targets) == 1 and not ptr.null
        for t, offs in ptr.targets.items():
            offs = offs_fn(offs)
            if t[0] == "s":
                self._escape_value(st, v)
                continue
            o = st.objs[t[1]]
            if o.escaped:
                self._escape_value(st, v)
                continue
            off = si_const(offs)
            if not single or off is None:
                self._escape(st, t[1])
                self._escape_value(st, v)
                continue
            for (co, ct) in list(o.cells):
                csz = 8 if ct == "ref" else int(ct[1:]) // 8
                if co < off + size and off < co + csz and (co, ct) != (off, tag):
                    del o.cells[(co, ct)]
            st.tick += 1
            o.cells[(off, tag)] = (v, st.tick)

    # -- events and checks ---------------------------------------------------------------
    def _sizes_types(self, st, v):
        sizes, types = {}, {}
        if not isinstance(v, SymPtr):
            return sizes, types
        for t in v.targets:
            if t[0] == "p":
                o = st.objs[t[1]]
                ao = o.aobj
                sz = si_iv(o.size)
                sizes[ao] = sz if ao not in sizes else sizes[ao].join(sz)
                if ao in types and types[ao] != o.ty:
                    types[ao] = "conflict"
                else:
                    types[ao] = o.ty
            else:
                ao = t[1]
                inf = self.a.objs.get(ao)
                sizes[ao] = inf.size if inf else None
                facts = self.st.facts.get(ao.site)
                ty = None
                if facts is not None:
                    ty = facts.versions.get(ao, facts.ty if ao.version == "" else None)
                types[ao] = ty
        return sizes, types

    def _violate(self, site, reasons):
        if reasons:
            self.violations.setdefault(site, set()).update(reasons)

    def _check(self, st, fr, label, i, ins):
        op = ins.op
        if op not in ("gep", "load", "store", "free", "realloc", "cast"):
            return
        ptr_v = self._val(st, fr, ins.args[0]) if ins.args else None

        def operand(o):
            return self._ev_view(st, self._val(st, fr, o))

        src = None
        if op == "cast" and not isinstance(ptr_v, SymPtr):
            key = (fr.fn, ins.args[0].name if isinstance(ins.args[0], Var) else None)
            if key not in self._srcs:
                self._srcs[key] = load_sources(self.p, self.a, fr.fn, ins.args[0])
            src = self._srcs[key]
        res = None
        if op == "gep":
            res = self.a.operand(fr.fn, fr.ctx, Var(ins.dest), label)

        def alloc_new(o):
            return AbsObj(o.site, loc_str(fr.fn, label, i), o.clone)

        sizes, types = self._sizes_types(st, ptr_v)
        for ev in instr_events(self.p, fr.fn, label, i, ins, operand, alloc_new, src, res):
            o = ev.obj
            if o.is_global:
                continue
            site = o.site
            if ev.kind != "intcast":
                self._violate(site, check_event(ev, sizes.get(o)))
            ty = types.get(o)
            if ev.kind == "intcast":
                self._violate(site, check_type_event(self.p, ev, None))
                continue
            if (ev.kind == "cast" and ev.from_view is None and ev.to_view is not None
                    and o.version == "" and ev.offs == Interval.const(0)):
                self.views.setdefault(site, set()).add(ev.to_view)
            if ty == "conflict":
                self._violate(site, {"realloc-retype"})
            elif ty is None:
                if o.version == "":
                    self.pending.setdefault(site, []).append(ev)
                elif ev.kind in ("access", "cast"):
                    self._violate(site, {"realloc-retype"})
            else:
                self._violate(site, check_against(self.p, ev, ty))

    # -- execution ---------------------------------------------------------------------
    def _count_step(self):
        self.steps += 1
        if self.steps > self.budget.steps:
            raise _Limit

    def _end_path(self):
        self.paths += 1
        if self.paths > self.budget.paths:
            raise _Limit

    def _enter(self, st, fr, pred):
        code = self.p.functions[fr.fn].block(fr.block).instrs
        vals = []
        i = 0
        while i < len(code) and code[i].op == "phi":
            ins = code[i]
            for lab, v in ins.incoming:
                if lab == pred:
                    vals.append((ins.dest, self._val(st, fr, v)))
            i += 1
        for d, v in vals:
            self._set(st, fr, d, v)
        fr.idx = i

    def _jump(self, st, fr, label) -> bool:
        """Move to ``label``; False when the path must end here."""
        fi = self.a.idx[fr.fn]
        pred = fr.block
        lp = fi.loops.get(label)
        back = lp is not None and pred in lp.body
        if lp is not None and not back:
            fr.loops[label] = 0
        fr.block = label
        self._enter(st, fr, pred)
        if back:
            n = fr.loops.get(label, 0) + 1
            fr.loops[label] = n
            if n > self.unroll + 1:
                return False
            if n == self.unroll + 1:
                self.hit_unroll = True
                self._havoc(st, fr, label)
        return True

    def _havoc(self, st, fr, header):
        for lab, name in self._defs[(fr.fn, header)]:
            v = self.a.operand(fr.fn, fr.ctx, Var(name), header if lab == header else None)
            if v is None:
                continue
            self._set(st, fr, name, self._from_static(v))
        for oid in list(st.objs):
            self._escape(st, oid)
        st.loads.clear()

    def _fork(self, st):
        return copy.deepcopy(st)

    def _exec(self, st: State, stack):
        while True:
            self._count_step()
            fr = st.frames[-1]
            block = self.p.functions[fr.fn].block(fr.block)
            i = fr.idx
            ins = block.instrs[i]
            label = fr.block
            op = ins.op
            self._check(st, fr, label, i, ins)
            fr.idx += 1
            if op == "br":
                c = self._val(st, fr, ins.args[0])
                outcomes = []
                for k, lab in enumerate(ins.labels):
                    want = k == 0
                    if isinstance(c, frozenset):
                        if not any((v != 0) == want for v in c):
                            continue
                    outcomes.append((lab, want))
                if len(outcomes) == 1 or (len(outcomes) == 2 and ins.labels[0] == ins.labels[1]):
                    lab, want = outcomes[0]
                    if not self._refine_branch(st, fr, ins.args[0], want) or not self._jump(st, fr, lab):
                        return self._end_path()
                    continue
                alive = []
                for lab, want in outcomes:
                    s2 = self._fork(st)
                    f2 = s2.frames[-1]
                    if self._refine_branch(s2, f2, ins.args[0], want):
                        alive.append((s2, f2, lab))
                if not alive:
                    return self._end_path()
                for s2, f2, lab in alive[1:][::-1]:
                    if self._jump(s2, f2, lab):
                        stack.append(s2)
                    else:
                        self._end_path()
                st, fr, lab = alive[0]
                if not self._jump(st, fr, lab):
                    return self._end_path()
                continue
            if op == "jmp":
                if not self._jump(st, fr, ins.labels[0]):
                    return self._end_path()
                continue
            if op == "ret":
                v = self._val(st, fr, ins.args[0]) if ins.args else None
                st.frames.pop()
                if not st.frames:
                    return self._end_path()
                caller = st.frames[-1]
                if fr.ret_dest is not None:
                    self._set(st, caller, fr.ret_dest, v)
                continue
            if op == "call":
                if fr.depth + 1 > self.depth:
                    self.hit_depth = True
                    raise _Limit
                callee = self.p.functions[ins.callee]
                nf = Frame(callee.name, self.a.callee_ctx(fr.fn, label, i, fr.ctx), self._new_fid(),
                           callee.entry.label, ret_dest=ins.dest, depth=fr.depth + 1)
                for prm, a in zip(callee.params, ins.args):
                    nf.env[prm.name] = self._val(st, fr, a)
                    nf.stamp[prm.name] = 0
                st.frames.append(nf)
                self._enter(st, nf, None)
                continue
            if not self._step(st, fr, label, i, ins):
                return self._end_path()

    def _step(self, st, fr, label, i, ins) -> bool:
        """Execute a straight-line instruction; False ends the path."""
        op = ins.op
        val = lambda o: self._val(st, fr, o)  # noqa: E731
        tag = self.p.vtype(fr.fn, ins.dest).tag if ins.dest else "i64"
        if op == "alloc":
            sid = f"{fr.fn}:{ins.dest}"
            size = frozenset({self.p.table.size(ins.ty)}) if ins.ty is not None else val(ins.args[0])
            facts = self.st.facts.get(sid)
            clone = fr.ctx if self.a.heap_clone else ""
            oid = self._new_obj(st, AbsObj(sid, "", clone), size, facts.ty if facts else None)
            self._set(st, fr, ins.dest, SymPtr({("p", oid): ZERO}))
        elif op == "arith":
            a, b = val(ins.args[0]), val(ins.args[1])
            r = si_binop(ins.pred, a, b, tag)
            self._set(st, fr, ins.dest, r)
            self._link(st, fr, ins, a, b, tag)
        elif op == "cmp":
            a, b = val(ins.args[0]), val(ins.args[1])
            self._set(st, fr, ins.dest, _cmp_value(ins.pred, a, b))
            st.conds[(fr.fid, ins.dest)] = (ins.pred, ins.args[0], ins.args[1],
                                             self._stamps(fr, ins.args))
        elif op == "assign":
            v = val(ins.args[0])
            self._set(st, fr, ins.dest, v)
            if isinstance(ins.args[0], Var) and not isinstance(v, SymPtr):
                st.eqs.append(((fr.fid, ins.dest), (fr.fid, ins.args[0].name), 0,
                               self._stamps(fr, (Var(ins.dest), ins.args[0]))))
        elif op == "cast":
            v = val(ins.args[0])
            if isinstance(v, SymPtr):
                self._set(st, fr, ins.dest, v)
            else:
                self._set(st, fr, ins.dest, si_wrap(v, ins.ty.tag))
                if isinstance(ins.args[0], Var) and _fits(v, ins.ty.tag):
                    st.eqs.append(((fr.fid, ins.dest), (fr.fid, ins.args[0].name), 0,
                                   self._stamps(fr, (Var(ins.dest), ins.args[0]))))
        elif op == "gep":
            pv, k = val(ins.args[0]), val(ins.args[1])
            es = elem_size(self.p, self.a.base_view(fr.fn, ins.args[0]))
            d = si_binop("mul", k, frozenset({es}), "i64")
            self._set(st, fr, ins.dest, SymPtr({t: si_binop("add", o, d, "i64") for t, o in pv.targets.items()},
                                               pv.null))
        elif op in ("load", "store"):
            pv = val(ins.args[0])
            if not pv.targets:
                return False  # null dereference ends the execution
            po, prim = self.a.access_offset(fr.fn, ins)
            shift = frozenset({po})
            if op == "load":
                out = None
                for t, offs in pv.targets.items():
                    out = vjoin(out, self._read(st, t, si_binop("add", offs, shift, "i64"), prim.tag))
                self._set(st, fr, ins.dest, out)
                if len(pv.targets) == 1 and not pv.null:
                    (t, offs), = pv.targets.items()
                    off = si_const(offs)
                    if t[0] == "p" and off is not None and not st.objs[t[1]].escaped:
                        cell = st.objs[t[1]].cells.get((off + po, prim.tag))
                        st.loads[(fr.fid, ins.dest)] = (t[1], off + po, prim.tag,
                                                        cell[1] if cell else 0, fr.stamp[ins.dest])
            else:
                v = val(ins.args[1])
                if not isinstance(v, SymPtr):
                    v = si_wrap(v, prim.tag)
                self._write(st, pv, lambda o: si_binop("add", o, shift, "i64"), prim.tag, prim.size, v)
        elif op == "free":
            pv = val(ins.args[0])
            for t in pv.targets:
                if t[0] == "p":
                    st.objs[t[1]].freed = True
        elif op == "realloc":
            pv = val(ins.args[0])
            if not pv.targets:
                return False
            size = frozenset({self.p.table.size(ins.ty)}) if ins.ty is not None else val(ins.args[1])
            if len(pv.targets) == 1 and not pv.null and next(iter(pv.targets))[0] == "p":
                (t, _), = pv.targets.items()
                old = st.objs[t[1]]
                ty = None
                if old.ty is not None:
                    ns = si_const(size)
                    ty = realloc_type_transition(self.p.table, old.ty, ins.ty, ns)
                    if ty is None:
                        self._violate(old.aobj.site, {"realloc-retype"})
                nobj = AbsObj(old.aobj.site, loc_str(fr.fn, label, i), old.aobj.clone)
                nid = self._new_obj(st, nobj, size, ty)
                new = st.objs[nid]
                limit = si_iv(size).lo
                for (co, ct), cv in old.cells.items():
                    if co < limit:
                        new.cells[(co, ct)] = cv
                if old.escaped:
                    self._escape(st, nid)
                old.freed = True
                self._set(st, fr, ins.dest, SymPtr({("p", nid): ZERO}))
            else:
                for t in pv.targets:
                    if t[0] == "p":
                        self._escape(st, t[1])
                self._set(st, fr, ins.dest, self._from_static(
                    self.a.operand(fr.fn, fr.ctx, Var(ins.dest), label)))
        elif op == "spawn":
            for a in ins.args:
                self._escape_value(st, val(a))
        elif op == "gaddr":
            self._set(st, fr, ins.dest, val(GlobalRef(ins.args[0].name)))
        return True

    # -- conditions ---------------------------------------------------------------------
    def _stamps(self, fr, ops):
        return tuple(fr.stamp.get(o.name) if isinstance(o, Var) else None for o in ops)

    def _link(self, st, fr, ins, a, b, tag):
        x = (fr.fid, ins.dest)
        if ins.pred not in ("add", "sub"):
            return
        av, bv = ins.args
        if isinstance(av, Var) and isinstance(bv, Const):
            c = bv.value if ins.pred == "add" else -bv.value
            if _fits(si_binop("add", a, frozenset({c}), "i64"), tag):
                st.eqs.append((x, (fr.fid, av.name), c, self._stamps(fr, (Var(ins.dest), av))))
        elif isinstance(bv, Var) and isinstance(av, Const) and ins.pred == "add":
            if _fits(si_binop("add", b, frozenset({av.value}), "i64"), tag):
                st.eqs.append((x, (fr.fid, bv.name), av.value, self._stamps(fr, (Var(ins.dest), bv))))

    def _frame(self, st, fid):
        for f in st.frames:
            if f.fid == fid:
                return f
        return None

    def _refine_branch(self, st, fr, cond_op, want: bool) -> bool:
        c = self._val(st, fr, cond_op)
        if isinstance(c, frozenset):
            keep = frozenset(v for v in c if (v != 0) == want)
            if not keep:
                return False
        if not isinstance(cond_op, Var):
            return True
        rec = st.conds.get((fr.fid, cond_op.name))
        if rec is None:
            return True
        pred, a, b, stamps = rec
        if self._stamps(fr, (a, b)) != stamps:
            return True
        pred = pred if want else NEGATE[pred]
        av, bv = self._val(st, fr, a), self._val(st, fr, b)
        if isinstance(av, SymPtr) or isinstance(bv, SymPtr):
            return self._refine_null(st, fr, pred, a, av, b, bv)
        na = si_refine(av, pred, bv)
        if na is None:
            return False
        nb = si_refine(bv, SWAP[pred], na)
        if nb is None:
            return False
        work = []
        if isinstance(a, Var) and na != av:
            fr.env[a.name] = na
            work.append((fr.fid, a.name))
        if isinstance(b, Var) and nb != bv:
            fr.env[b.name] = nb
            work.append((fr.fid, b.name))
        return self._propagate(st, work)

    def _refine_null(self, st, fr, pred, a, av, b, bv):
        if pred not in ("eq", "ne"):
            return True
        if isinstance(bv, SymPtr) and isinstance(av, SymPtr):
            if not bv.targets and bv.null:
                var, pv = a, av
            elif not av.targets and av.null:
                var, pv = b, bv
            else:
                return True
        else:
            return True
        if pred == "eq":
            if not pv.null:
                return False
            new = SymPtr(null=True)
        else:
            if not pv.targets:
                return False
            new = SymPtr(pv.targets, False)
        if isinstance(var, Var):
            fr.env[var.name] = new
        return True

    def _propagate(self, st, work) -> bool:
        rounds = 0
        while work and rounds < 64:
            rounds += 1
            key = work.pop()
            fid, name = key
            fr = self._frame(st, fid)
            if fr is None:
                continue
            val = fr.env[name]
            ld = st.loads.get(key)
            if ld is not None and ld[4] == fr.stamp.get(name):
                oid, off, tag, ver, _ = ld
                o = st.objs.get(oid)
                cell = o.cells.get((off, tag)) if o is not None and not o.escaped else None
                if cell is not None and cell[1] == ver:
                    o.cells[(off, tag)] = (val, ver)
            for x, y, c, stamps in st.eqs:
                if key not in (x, y):
                    continue
                fx, fy = self._frame(st, x[0]), self._frame(st, y[0])
                if fx is None or fy is None:
                    continue
                if (fx.stamp.get(x[1]), fy.stamp.get(y[1])) != stamps:
                    continue
                xv, yv = fx.env[x[1]], fy.env[y[1]]
                if key == x:
                    ny = si_refine(yv, "eq", si_binop("sub", xv, frozenset({c}), "i64"))
                    if ny is None:
                        return False
                    if ny != yv:
                        fy.env[y[1]] = ny
                        work.append(y)
                else:
                    nx = si_refine(xv, "eq", si_binop("add", yv, frozenset({c}), "i64"))
                    if nx is None:
                        return False
                    if nx != xv:
                        fx.env[x[1]] = nx
                        work.append(x)
        return True


def _cmp_value(pred, a, b):
    if isinstance(a, SymPtr) or isinstance(b, SymPtr):
        if pred in ("eq", "ne") and isinstance(a, SymPtr) and isinstance(b, SymPtr):
            for x, y in ((a, b), (b, a)):
                if not y.targets and y.null:
                    if not x.null:
                        return frozenset({int(pred == "ne")})
                    if not x.targets:
                        return frozenset({int(pred == "eq")})
        return frozenset({0, 1})
    if si_refine(a, pred, b) is None:
        return frozenset({0})
    if si_refine(a, NEGATE[pred], b) is None:
        return frozenset({1})
    return frozenset({0, 1})


def check_against(p: HirProgram, ev: Event, ty) -> list[str]:
    """Type reasons of an event against the object's actual type.

    Along one path the object's type is known, so a view-to-view cast is
    judged by whether the target view fits the object's layout rather than
    by how the two views relate.
    """
    if ev.kind == "cast" and ev.from_view is not None and ty is not None:
        ev = replace(ev, from_view=None)
    return check_type_event(p, ev, ty)


@dataclass
class Refinement:
    """Outcome of one exploration."""

    flips: set
    exhausted: bool
    hit_depth: bool
    hit_unroll: bool
    paths: int


def explore_once(p: HirProgram, st: StaticResult, budget: ExplorationBudget,
                 depth: int, unroll: int) -> Refinement:
    ex = Explorer(p, st, budget, depth, unroll).run()
    flips = set()
    if not ex.exhausted:
        for sid, v in st.verdicts.items():
            if v.safe or any(r in STRUCTURAL for r in v.reasons):
                continue
            if ex.violations.get(sid):
                continue
            facts = st.facts[sid]
            ty = facts.ty
            if ty is None:
                if facts.size is None:
                    continue
                ty = resolve_delayed_type(p.table, facts.size, ex.views.get(sid, ()))
                if ty is None:
                    if ex.views.get(sid) or ex.pending.get(sid):
                        continue
                    # never interpreted on any feasible path: no type to give it
                    continue
            bad = False
            for ev in ex.pending.get(sid, ()):
                if check_against(p, ev, ty):
                    bad = True
                    break
            if not bad:
                flips.add((sid, ty))
    return Refinement(flips, ex.exhausted, ex.hit_depth, ex.hit_unroll, ex.paths)


def prune_false_positives(p: HirProgram, st: StaticResult,
                          budget: ExplorationBudget | None = None) -> dict[str, SiteVerdict]:
    """Verdicts after path-sensitive re-checking of the unsafe sites.

    The flips are the union over every smaller call depth and unroll count,
    so enlarging a budget never loses a flip.
    """
    budget = budget or ExplorationBudget()
    out = dict(st.verdicts)
    candidates = [s for s, v in st.verdicts.items()
                  if not v.safe and not any(r in STRUCTURAL for r in v.reasons)]
    if not candidates:
        return out
    flips: dict[str, object] = {}
    for u in range(budget.unroll + 1):
        r = None
        for d in range(budget.depth + 1):
            r = explore_once(p, st, budget, d, u)
            for sid, ty in sorted(r.flips, key=lambda x: x[0]):
                flips.setdefault(sid, ty)
            if not r.hit_depth:
                break
        if r is not None and not r.hit_unroll and not r.hit_depth:
            break
    for sid, ty in flips.items():
        v = st.verdicts[sid]
        out[sid] = SiteVerdict(sid, v.fn, v.line, "Safe", [], "symexec", p.table.allocated_type(ty))
    return out
