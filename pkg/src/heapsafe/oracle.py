"""Exhaustive concrete interpreter used as ground truth.

Every combination of ``main``'s input values is executed, and for programs
with spawns every thread interleaving is explored by replaying schedule
prefixes (stateless model checking).  Threads may only interfere through
objects that have escaped (were stored somewhere, passed to a spawn, or are
globals), so only operations on escaped objects are scheduling points.

Memory is byte-granular: each byte remembers the write that produced it,
so reading bytes under a different primitive tag or at a different offset
than they were written is reported as type confusion.  Fresh memory reads
as zero and is reported as an uninitialized read.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .hir.ir import Const, GlobalRef, HirProgram, Null, Var
from .hir.types import wrap_int

FINDING_KINDS = ("oob", "type-confusion", "uaf", "double-free", "invalid-free", "ubi", "null-deref")
# the kinds a Safe verdict promises cannot happen
SOUNDNESS_KINDS = ("oob", "type-confusion")

NULL = (None, 0)


@dataclass(frozen=True)
class Finding:
    kind: str
    site: str  # allocation site of the object, "$g" for globals, "" if none
    loc: str  # fn:block:index
    inputs: tuple = ()  # witness: ((param, value), ...)
    detail: str = ""

    @property
    def key(self):
        return (self.kind, self.site, self.loc)

    def to_json(self) -> dict:
        return {"kind": self.kind, "site": self.site, "loc": self.loc,
                "inputs": dict(self.inputs), "detail": self.detail}


@dataclass
class OracleResult:
    findings: list[Finding]
    partial: bool
    runs: int
    inputs: int
    points_to: dict = field(default_factory=dict)  # (fn, name) -> set of sites
    threads: int = 0  # most threads alive in one execution, main included
    cast_views: dict = field(default_factory=dict)  # site -> set of concrete views

    def sites_with(self, kinds=SOUNDNESS_KINDS) -> set[str]:
        return {f.site for f in self.findings if f.kind in kinds}

    def clean(self, site: str, kinds=SOUNDNESS_KINDS) -> bool:
        return site not in self.sites_with(kinds)

    def to_json(self) -> dict:
        return {"partial": self.partial, "runs": self.runs, "inputs": self.inputs,
                "findings": [f.to_json() for f in sorted(self.findings, key=lambda f: f.key)]}


class _Obj:
    __slots__ = ("id", "site", "size", "freed", "bytes", "escaped")

    def __init__(self, oid, site, size, escaped=False):
        self.id = oid
        self.site = site
        self.size = size
        self.freed = False
        self.bytes: dict[int, tuple] = {}
        self.escaped = escaped


class _Stop(Exception):
    pass


class _Frame:
    __slots__ = ("fn", "block", "idx", "env", "ret_dest", "prev")

    def __init__(self, fn, block, env, ret_dest=None):
        self.fn = fn
        self.block = block
        self.idx = 0
        self.env = env
        self.ret_dest = ret_dest
        self.prev = None


class Interpreter:
    """Runs one program; ``explore`` enumerates inputs and interleavings."""

    MEMORY_OPS = frozenset({"load", "store", "free", "realloc"})

    def __init__(self, p: HirProgram, max_steps: int = 200_000, record_points_to: bool = False):
        self.p = p
        self.max_steps = max_steps
        self.record = record_points_to
        self._compile()

    # -- preparation ----------------------------------------------------------
    def _compile(self):
        p = self.p
        self.code = {}
        for f in p.functions.values():
            vt = p.vtypes[f.name]
            for b in f.blocks:
                out = []
                for i, ins in enumerate(b.instrs):
                    extra = None
                    if ins.op in ("load", "store"):
                        a0 = ins.args[0]
                        view = p.globals[a0.name].ty if isinstance(a0, GlobalRef) else vt[a0.name].view
                        po, prim = p.table.resolve_path(view, ins.path)
                        extra = (po, prim.tag, prim.size)
                    elif ins.op == "gep":
                        a0 = ins.args[0]
                        view = p.globals[a0.name].ty if isinstance(a0, GlobalRef) else vt[a0.name].view
                        extra = 1 if view is None else p.table.size(view)
                    elif ins.op == "alloc":
                        extra = p.table.size(ins.ty) if ins.ty is not None else None
                    elif ins.op == "realloc":
                        extra = p.table.size(ins.ty) if ins.ty is not None else None
                    elif ins.op == "cast":
                        extra = None if vt[ins.dest].is_ref else ins.ty.tag
                    tag = vt[ins.dest].tag if ins.dest and ins.dest in vt else "i64"
                    out.append((ins, extra, tag, f"{f.name}:{b.label}:{i}"))
                self.code[(f.name, b.label)] = out
        self.global_order = sorted(p.globals)

    # -- exploration ------------------------------------------------------------
    def input_space(self):
        main = self.p.functions[self.p.entry]
        names = [prm.name for prm in main.params]
        ranges = [range(prm.lo, prm.hi + 1) for prm in main.params]
        return names, ranges

    def explore(self, cap: int = 100_000) -> OracleResult:
        names, ranges = self.input_space()
        findings: dict = {}
        runs = 0
        n_inputs = 0
        partial = False
        self.points_to = {}
        self.cast_views = {}
        self.max_threads = 0
        for vals in itertools.product(*ranges):
            if runs >= cap:
                partial = True
                break
            n_inputs += 1
            inputs = tuple(zip(names, vals))
            prefix: list[int] = []
            while True:
                fs, decisions, cut = self.run(dict(inputs), prefix)
                runs += 1
                partial |= cut
                for f in fs:
                    f = Finding(f.kind, f.site, f.loc, inputs, f.detail)
                    findings.setdefault(f.key, f)
                k = len(decisions) - 1
                while k >= 0 and decisions[k][0] + 1 >= decisions[k][1]:
                    k -= 1
                if k < 0:
                    break
                if runs >= cap:
                    partial = True
                    break
                prefix = [d[0] for d in decisions[:k]] + [decisions[k][0] + 1]
        return OracleResult(sorted(findings.values(), key=lambda f: f.key), partial, runs,
                            n_inputs, self.points_to, self.max_threads, self.cast_views)

    # -- one execution ----------------------------------------------------------
    def run(self, inputs: dict, schedule: list[int]):
        self.objs: list[_Obj] = []
        self.findings: list[Finding] = []
        self.wid = 0
        self.globals = {}
        for g in self.global_order:
            self.globals[g] = self._new_obj("$" + g, self.p.table.size(self.p.globals[g].ty), True)
        for g in self.global_order:
            decl = self.p.globals[g]
            if decl.init is not None:
                self._init_global(self.globals[g], decl.ty, decl.init, 0, "@" + g)
        main = self.p.functions[self.p.entry]
        env = {prm.name: wrap_int(inputs[prm.name], prm.ty.tag) for prm in main.params}
        threads = [_Frame(main.name, main.entry.label, env)]
        self._enter(threads[0], None)
        decisions: list[tuple[int, int]] = []
        # sleep set: threads whose next operation was already explored first
        # from an equivalent state, with that operation's footprint
        sleep: dict[int, tuple] = {}
        cur = 0
        steps = 0
        cut = False
        live = 1
        try:
            while True:
                runnable = [t for t, fr in enumerate(threads) if fr is not None]
                if not runnable:
                    break
                live = max(live, len(runnable))
                here = self._footprint(threads[cur]) if cur in runnable else None
                if cur not in runnable or (len(runnable) > 1 and here is not None):
                    order = ([cur] if cur in runnable else []) + [t for t in runnable if t != cur]
                    awake = [t for t in order if t not in sleep]
                    if not awake:
                        break  # every continuation is covered by another branch
                    if len(awake) > 1:
                        d = len(decisions)
                        choice = schedule[d] if d < len(schedule) else 0
                        decisions.append((choice, len(awake)))
                        for t in awake[:choice]:
                            sleep[t] = self._footprint(threads[t])
                    else:
                        choice = 0
                    cur = awake[choice]
                    here = self._footprint(threads[cur])
                steps += 1
                if steps > self.max_steps:
                    cut = True
                    break
                threads[cur] = self._step(threads[cur], threads)
                if here is not None and sleep:
                    sleep = {t: fp for t, fp in sleep.items() if not _dependent(fp, here)}
        except _Stop:
            pass
        self.max_threads = max(self.max_threads, live)
        return self.findings, decisions, cut

    def _footprint(self, fr: _Frame):
        """What the thread's next operation touches, or None when no other
        thread can observe it."""
        ins = self.code[(fr.fn, fr.block)][fr.idx][0]
        if ins.op == "spawn":
            return ("x", None)
        if ins.op not in self.MEMORY_OPS:
            return None
        v = self._val(fr.env, ins.args[0])
        if v[0] is None:
            return ("x", None)
        if not self.objs[v[0]].escaped:
            return None
        return ("r" if ins.op == "load" else "w", v[0])

    def _new_obj(self, site, size, escaped=False) -> int:
        o = _Obj(len(self.objs), site, size, escaped)
        self.objs.append(o)
        return o.id

    def _init_global(self, gid, ty, init, off, sid):
        from .alias import field_offset

        if isinstance(init, dict):
            for fname, sub in init.items():
                foff, fty = field_offset(self.p.table, ty, fname)
                self._init_global(gid, fty, sub, off + foff, f"{sid}.{fname}")
            return
        if isinstance(init, Const):
            self._write(gid, off, ty.tag, 8 if ty.tag == "ref" else ty.size, wrap_int(init.value, ty.tag))
        elif isinstance(init, Null):
            self._write(gid, off, "ref", 8, NULL)
        else:
            site = self.p.sites[sid]
            size = site.size.value if site.size is not None else self.p.table.size(site.ty)
            oid = self._new_obj(sid, size, True)
            self._write(gid, off, "ref", 8, (oid, 0))

    # -- memory -------------------------------------------------------------------
    def _finding(self, kind, site, loc, detail=""):
        self.findings.append(Finding(kind, site, loc, (), detail))

    def _write(self, oid, off, tag, size, value):
        self.wid += 1
        rec = (self.wid, tag, off, value)
        b = self.objs[oid].bytes
        for k in range(off, off + size):
            b[k] = rec

    def _access(self, ptr, po, tag, size, loc, store, value=None):
        oid, off = ptr
        if oid is None:
            self._finding("null-deref", "", loc)
            raise _Stop
        o = self.objs[oid]
        a = off + po
        zero = NULL if tag == "ref" else 0
        if o.freed:
            self._finding("uaf", o.site, loc)
            return zero
        if a < 0 or a + size > o.size:
            self._finding("oob", o.site, loc, f"[{a}, {a + size}) outside [0, {o.size})")
            return zero
        if store:
            if isinstance(value, tuple) and value[0] is not None:
                # any pointer kept in memory may reach another thread
                self.objs[value[0]].escaped = True
            self._write(oid, a, tag, size, value)
            return None
        b = o.bytes
        first = b.get(a)
        if first is None:
            if any(b.get(k) is not None for k in range(a, a + size)):
                self._finding("type-confusion", o.site, loc, "partially written bytes")
            else:
                self._finding("ubi", o.site, loc)
            return zero
        wid, wtag, wstart, wval = first
        if wtag != tag or wstart != a or any(b.get(k) is not first for k in range(a + 1, a + size)):
            self._finding("type-confusion", o.site, loc, f"{tag} read of {wtag} written at {wstart}")
            return zero
        return wval

    # -- stepping -------------------------------------------------------------------
    def _val(self, env, op):
        if type(op) is Var:
            return env[op.name]
        if type(op) is Const:
            return op.value
        if type(op) is Null:
            return NULL
        return (self.globals[op.name], 0)

    def _enter(self, fr: _Frame, pred: str | None):
        code = self.code[(fr.fn, fr.block)]
        vals = []
        i = 0
        while i < len(code) and code[i][0].op == "phi":
            ins = code[i][0]
            for lab, v in ins.incoming:
                if lab == pred:
                    vals.append((ins.dest, self._val(fr.env, v)))
                    break
            i += 1
        for d, v in vals:
            fr.env[d] = v
        if self.record:
            for d, v in vals:
                self._note(fr.fn, d, v)
        fr.idx = i

    def _note(self, fn, name, v):
        if isinstance(v, tuple) and v[0] is not None:
            self.points_to.setdefault((fn, name), set()).add(self.objs[v[0]].site)

    def _jump(self, fr, label):
        pred = fr.block
        fr.block = label
        self._enter(fr, pred)

    def _step(self, fr: _Frame, threads):
        ins, extra, tag, loc = self.code[(fr.fn, fr.block)][fr.idx]
        op = ins.op
        env = fr.env
        fr.idx += 1
        res = None
        if op == "alloc":
            size = extra if extra is not None else self._val(env, ins.args[0])
            res = (self._new_obj(f"{fr.fn}:{ins.dest}", max(int(size), 0)), 0)
        elif op == "arith":
            a, b = self._val(env, ins.args[0]), self._val(env, ins.args[1])
            r = a + b if ins.pred == "add" else a - b if ins.pred == "sub" else a * b
            res = wrap_int(r, tag)
        elif op == "cmp":
            res = int(_compare(ins.pred, self._val(env, ins.args[0]), self._val(env, ins.args[1]), self.objs))
        elif op == "br":
            c = self._val(env, ins.args[0])
            self._jump(fr, ins.labels[0] if c else ins.labels[1])
            return fr
        elif op == "jmp":
            self._jump(fr, ins.labels[0])
            return fr
        elif op == "gep":
            pv = self._val(env, ins.args[0])
            k = self._val(env, ins.args[1])
            res = pv if pv[0] is None else (pv[0], pv[1] + k * extra)
        elif op == "assign":
            res = self._val(env, ins.args[0])
        elif op == "cast":
            v = self._val(env, ins.args[0])
            if extra is not None:
                res = wrap_int(v, extra)
            else:
                res = v
                if not ins.opaque and v[0] is not None and v[1] == 0:
                    self.cast_views.setdefault(self.objs[v[0]].site, set()).add(ins.ty)
        elif op == "load":
            po, t, size = extra
            res = self._access(self._val(env, ins.args[0]), po, t, size, loc, False)
        elif op == "store":
            po, t, size = extra
            v = self._val(env, ins.args[1])
            if t != "ref":
                v = wrap_int(v, t)
            self._access(self._val(env, ins.args[0]), po, t, size, loc, True, v)
            return fr
        elif op == "free":
            self._free(self._val(env, ins.args[0]), loc)
            return fr
        elif op == "realloc":
            res = self._realloc(env, ins, extra, loc)
        elif op == "gaddr":
            res = (self.globals[ins.args[0].name], 0)
        elif op == "call":
            callee = self.p.functions[ins.callee]
            args = {prm.name: self._val(env, a) for prm, a in zip(callee.params, ins.args)}
            nf = _Frame(callee.name, callee.entry.label, args, ins.dest)
            nf.prev = fr
            self._enter(nf, None)
            if self.record:
                for k, v in args.items():
                    self._note(callee.name, k, v)
            return nf
        elif op == "spawn":
            callee = self.p.functions[ins.callee]
            args = {prm.name: self._val(env, a) for prm, a in zip(callee.params, ins.args)}
            for v in args.values():
                if isinstance(v, tuple) and v[0] is not None:
                    self.objs[v[0]].escaped = True
            nf = _Frame(callee.name, callee.entry.label, args)
            self._enter(nf, None)
            if self.record:
                for k, v in args.items():
                    self._note(callee.name, k, v)
            threads.append(nf)
            return fr
        elif op == "ret":
            v = self._val(env, ins.args[0]) if ins.args else None
            caller = fr.prev
            if caller is None:
                return None
            if fr.ret_dest is not None:
                caller.env[fr.ret_dest] = v
                if self.record:
                    self._note(caller.fn, fr.ret_dest, v)
            return caller
        if ins.dest is not None:
            env[ins.dest] = res
            if self.record:
                self._note(fr.fn, ins.dest, res)
        return fr

    def _free(self, ptr, loc):
        oid, off = ptr
        if oid is None:
            return
        o = self.objs[oid]
        if o.site.startswith("$") or off != 0:
            self._finding("invalid-free", o.site, loc)
            return
        if o.freed:
            self._finding("double-free", o.site, loc)
            return
        o.freed = True

    def _realloc(self, env, ins, extra, loc):
        ptr = self._val(env, ins.args[0])
        oid, off = ptr
        if oid is None:
            self._finding("null-deref", "", loc, "realloc of null")
            raise _Stop
        o = self.objs[oid]
        if o.freed:
            self._finding("uaf", o.site, loc, "realloc of freed object")
            raise _Stop
        if o.site.startswith("$") or off != 0:
            self._finding("invalid-free", o.site, loc)
            raise _Stop
        size = extra if extra is not None else self._val(env, ins.args[1])
        size = max(int(size), 0)
        nid = self._new_obj(o.site, size, o.escaped)
        n = self.objs[nid]
        for k, rec in o.bytes.items():
            if k < size:
                n.bytes[k] = rec
        o.freed = True
        return (nid, 0)


def _dependent(a, b) -> bool:
    if a is None or b is None:
        return False
    if a[0] == "x" or b[0] == "x":
        return True
    return a[1] == b[1] and "w" in (a[0], b[0])


def _compare(pred, a, b, objs):
    if isinstance(a, tuple) or isinstance(b, tuple):
        a = a if isinstance(a, tuple) else (None, a)
        b = b if isinstance(b, tuple) else (None, b)
        ka = (-1 if a[0] is None else a[0], a[1])
        kb = (-1 if b[0] is None else b[0], b[1])
        a, b = ka, kb
    if pred == "lt":
        return a < b
    if pred == "le":
        return a <= b
    if pred == "gt":
        return a > b
    if pred == "ge":
        return a >= b
    if pred == "eq":
        return a == b
    return a != b


def run_oracle(p: HirProgram, cap: int = 100_000, record_points_to: bool = False,
               max_steps: int = 200_000) -> OracleResult:
    """Explore every input and interleaving of ``p`` up to ``cap`` executions."""
    return Interpreter(p, max_steps, record_points_to).explore(cap)
