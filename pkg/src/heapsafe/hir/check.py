"""Static checks that turn parsed declarations into a validated program."""

from __future__ import annotations

from .indexes import build_cfg, dominators
from .ir import (
    TERMINATORS, AllocationSite, AllocInit, Const, Function, GlobalDecl, GlobalRef,
    HirProgram, Instr, Null, Var, VType, site_id_for,
)
from .parser import Diagnostic, HirError
from .types import ArrayType, PrimType, Typedef, TypeError_, TypeTable

class _Checker:
    def __init__(self, typedefs, globals_, functions):
        self.raw_types = typedefs
        self.raw_globals = globals_
        self.raw_functions = functions
        self.diags: list[Diagnostic] = []
        self.typedefs: dict[str, Typedef] = {}
        self.globals: dict[str, GlobalDecl] = {}
        self.functions: dict[str, Function] = {}
        self.table: TypeTable | None = None

    def err(self, line, col, kind, msg):
        self.diags.append(Diagnostic(line, col, kind, msg))

    def flush(self):
        if self.diags:
            raise HirError(sorted(self.diags, key=lambda d: (d.line, d.col)))

    # -- declarations --------------------------------------------------------
    def declare(self):
        for td, tok in self.raw_types:
            if td.name in self.typedefs:
                self.err(tok.line, tok.col, "duplicate", f"type {td.name!r} already defined")
            self.typedefs[td.name] = td
            names = [f for f, _ in td.fields]
            for f in names:
                if names.count(f) > 1:
                    self.err(tok.line, tok.col, "duplicate", f"field {f!r} repeated in {td.name}")
                    break
        for g, tok in self.raw_globals:
            if g.name in self.globals:
                self.err(tok.line, tok.col, "duplicate", f"global {g.name!r} already defined")
            self.globals[g.name] = g
        for f, tok in self.raw_functions:
            if f.name in self.functions:
                self.err(tok.line, tok.col, "duplicate", f"function {f.name!r} already defined")
            self.functions[f.name] = f
        self.table = TypeTable(self.typedefs)
        for td, tok in self.raw_types:
            for _, ft in td.fields:
                self.check_type(ft, tok.line, tok.col)
        self.flush()
        for td, tok in self.raw_types:
            try:
                self.table.check(td.name)
            except TypeError_ as e:
                self.err(tok.line, tok.col, "type", str(e))
        self.flush()
        if "main" not in self.functions:
            self.err(1, 1, "unresolved", "no entry function 'main'")

    def check_type(self, t, line, col) -> bool:
        if isinstance(t, PrimType):
            return t.pointee is None or self.check_type(t.pointee, line, col)
        if isinstance(t, ArrayType):
            return self.check_type(t.elem, line, col)
        if t.name not in self.typedefs:
            self.err(line, col, "unresolved", f"unknown type {t.name!r}")
            return False
        return True

    # -- globals -------------------------------------------------------------
    def check_globals(self, sites):
        for g, tok in self.raw_globals:
            if not self.check_type(g.ty, tok.line, tok.col):
                continue
            if g.init is not None:
                self.check_ginit(g.ty, g.init, "@" + g.name, tok, sites)

    def check_ginit(self, ty, init, sid, tok, sites):
        def bad(msg):
            self.err(tok.line, tok.col, "type", f"{sid}: {msg}")

        if isinstance(ty, PrimType):
            if ty.tag == "ref":
                if isinstance(init, AllocInit):
                    if init.ty is not None and not self.check_type(init.ty, tok.line, tok.col):
                        return
                    if ty.pointee is not None and init.ty != ty.pointee:
                        return bad(f"initializer must allocate {_fmt(ty.pointee)}")
                    if init.size is not None and init.size <= 0:
                        return bad("allocation size must be positive")
                    size = init.size if init.ty is None else self.table.size(init.ty)
                    sites[sid] = AllocationSite(sid, "", tok.line, init.ty, Const(size), False)
                elif not isinstance(init, Null):
                    bad("ref initializer must be null or alloc")
            elif not isinstance(init, Const):
                bad("integer initializer expected")
            return
        if isinstance(ty, ArrayType) or not isinstance(init, dict):
            return bad("compound initializer must be a field map")
        td = self.typedefs[ty.name]
        members = dict(self.table._members(td))
        for fname, sub in init.items():
            if fname not in members:
                bad(f"no field {fname!r} in {td.name}")
                continue
            self.check_ginit(members[fname], sub, f"{sid}.{fname}", tok, sites)

    # -- functions -----------------------------------------------------------
    def check_function(self, fn: Function, sites, vtypes):
        labels = {}
        for b in fn.blocks:
            if b.label in labels:
                self.err(b.line, 1, "duplicate", f"block {b.label!r} repeated in {fn.name}")
            labels[b.label] = b
            if not b.instrs or b.instrs[-1].op not in TERMINATORS:
                self.err(b.line, 1, "cfg", f"block {b.label!r} lacks a terminator")
            for ins in b.instrs[:-1]:
                if ins.op in TERMINATORS:
                    self.err(ins.line, ins.col, "cfg", f"{ins.op} must end its block")
            seen_other = False
            for ins in b.instrs:
                if ins.op == "phi" and seen_other:
                    self.err(ins.line, ins.col, "ssa", "phi must lead its block")
                seen_other = seen_other or ins.op != "phi"
            for ins in b.instrs:
                for lab in ins.labels:
                    if lab not in {x.label for x in fn.blocks}:
                        self.err(ins.line, ins.col, "unresolved", f"unknown block {lab!r}")
                if ins.callee is not None and ins.callee not in self.functions:
                    line, col = ins.tokpos.get(ins.callee, (ins.line, ins.col))
                    self.err(line, col, "unresolved", f"unknown function {ins.callee!r}")
        pnames = [p.name for p in fn.params]
        for p in fn.params:
            self.check_type(p.ty, fn.line, 1)
            if pnames.count(p.name) > 1:
                self.err(fn.line, 1, "duplicate", f"parameter {p.name!r} repeated")
                break
        if fn.ret is not None:
            self.check_type(fn.ret, fn.line, 1)
        if self.diags:
            return
        cfg = build_cfg(fn)
        dom = dominators(cfg, fn.blocks[0].label)
        defs: dict[str, tuple[str, int]] = {p: (fn.blocks[0].label, -1) for p in pnames}
        for label, i, ins in fn.instructions():
            if ins.dest is None:
                continue
            if ins.dest in defs:
                self.err(ins.line, ins.col, "ssa", f"{ins.dest!r} defined more than once")
            defs[ins.dest] = (label, i)
            if ins.op == "alloc":
                sid = site_id_for(fn.name, ins.dest)
                size = ins.args[0] if ins.args else None
                if ins.ty is not None and self.check_type(ins.ty, ins.line, ins.col):
                    size = Const(self.table.size(ins.ty))
                sites[sid] = AllocationSite(
                    sid, fn.name, ins.line, ins.ty, size,
                    dynamic=not (ins.ty is not None or isinstance(size, Const)),
                    loc=(fn.name, label, i),
                )
            elif ins.ty is not None:
                self.check_type(ins.ty, ins.line, ins.col)
        for label, i, ins in fn.instructions():
            for opnd in list(ins.args) + [v for _, v in ins.incoming]:
                if isinstance(opnd, GlobalRef) and opnd.name not in self.globals:
                    line, col = ins.tokpos.get("@" + opnd.name, (ins.line, ins.col))
                    self.err(line, col, "unresolved", f"unknown global {opnd.name!r}")
            if label not in dom:
                # unreachable code only needs its names to exist
                for u in ins.uses():
                    if u not in defs:
                        line, col = ins.tokpos.get(u, (ins.line, ins.col))
                        self.err(line, col, "unresolved", f"undefined value {u!r}")
                continue
            if ins.op == "phi":
                preds = cfg.pred[label]
                inc_labels = [lab for lab, _ in ins.incoming]
                if sorted(inc_labels) != sorted(preds):
                    self.err(ins.line, ins.col, "ssa",
                             f"phi incoming {inc_labels} do not match predecessors {preds}")
                for lab, v in ins.incoming:
                    if isinstance(v, Var):
                        self.check_dominance(fn, defs, dom, v.name, lab, None, ins)
                continue
            for u in ins.uses():
                self.check_dominance(fn, defs, dom, u, label, i, ins)
        if self.diags:
            return
        self.infer(fn, defs, vtypes)

    def check_dominance(self, fn, defs, dom, name, label, idx, ins):
        line, col = ins.tokpos.get(name, (ins.line, ins.col))
        if name not in defs:
            self.err(line, col, "unresolved", f"undefined value {name!r}")
            return
        dl, di = defs[name]
        if label not in dom:
            return
        if dl == label:
            ok = idx is None or di < idx
        else:
            ok = dl in dom[label]
        if not ok:
            self.err(line, col, "ssa", f"use of {name!r} not dominated by its definition")

    # -- value types ---------------------------------------------------------
    def vt_of_type(self, t) -> VType:
        if isinstance(t, PrimType):
            if t.tag == "ref":
                return VType("ref", "ref", t.pointee)
            return VType("int", t.tag)
        # compound values live in memory only
        return VType("agg", "agg", t)

    def infer(self, fn: Function, defs, vtypes):
        env: dict[str, VType] = {}
        for p in fn.params:
            env[p.name] = self.vt_of_type(p.ty)
            if env[p.name].kind == "agg":
                self.err(fn.line, 1, "type", f"parameter {p.name!r} cannot be a compound")
            if (p.lo is not None) and not env[p.name].kind == "int":
                self.err(fn.line, 1, "type", f"range on non-integer parameter {p.name!r}")
        order = list(reversed(_rpo_postorder(fn)))
        # phis may depend on later definitions, so iterate to a fixpoint
        for _ in range(2 * len(defs) + 2):
            changed = False
            for label in order:
                for ins in fn.block(label).instrs:
                    if ins.dest is None or ins.dest in env:
                        continue
                    vt = self.result_type(fn, ins, env)
                    if vt is not None:
                        env[ins.dest] = vt
                        changed = True
            if not changed:
                # a loop-carried phi seeded by a literal takes the literal's type
                for label in order:
                    for ins in fn.block(label).instrs:
                        if ins.op == "phi" and ins.dest not in env:
                            lits = [v for _, v in ins.incoming if isinstance(v, (Const, Null))]
                            if lits:
                                env[ins.dest] = self.operand_type(lits[0], env)
                                changed = True
                                break
                    if changed:
                        break
                if not changed:
                    break
        for label in order:
            for ins in fn.block(label).instrs:
                if ins.dest is not None and ins.dest not in env:
                    self.err(ins.line, ins.col, "type", f"cannot infer a type for {ins.dest!r}")
        if self.diags:
            return
        for label in order:
            for ins in fn.block(label).instrs:
                self.check_kinds(fn, ins, env)
        vtypes[fn.name] = env

    def operand_type(self, op, env) -> VType | None:
        if isinstance(op, Var):
            return env.get(op.name)
        if isinstance(op, Const):
            return VType("int", "i64")
        if isinstance(op, Null):
            return VType("ref", "ref", None)
        g = self.globals[op.name]
        return VType("ref", "ref", g.ty)

    def result_type(self, fn, ins: Instr, env) -> VType | None:
        op = ins.op
        if op == "alloc":
            return VType("ref", "ref", ins.ty)
        if op == "realloc":
            return VType("ref", "ref", ins.ty)
        if op == "gaddr":
            return VType("ref", "ref", self.globals[ins.args[0].name].ty)
        if op == "gep":
            base = self.operand_type(ins.args[0], env)
            return None if base is None else VType("ref", "ref", base.view) if base.is_ref else base
        if op == "cast":
            src = self.operand_type(ins.args[0], env)
            if src is None:
                return None
            if src.is_ref:
                return VType("ref", "ref", None if ins.opaque else ins.ty)
            if isinstance(ins.ty, PrimType) and ins.ty.is_int:
                return VType("int", ins.ty.tag)
            return VType("bad", "bad")
        if op == "load":
            base = self.operand_type(ins.args[0], env)
            if base is None:
                return None
            if not base.is_ref or base.view is None:
                return VType("bad", "bad")
            try:
                _, prim = self.table.resolve_path(base.view, ins.path)
            except TypeError_:
                return VType("bad", "bad")
            return self.vt_of_type(prim)
        if op == "assign":
            return self.operand_type(ins.args[0], env)
        if op == "arith":
            for a in ins.args:
                t = self.operand_type(a, env)
                if isinstance(a, Var):
                    return t
            return VType("int", "i64")
        if op == "cmp":
            return VType("int", "i64")
        if op == "call":
            callee = self.functions[ins.callee]
            if callee.ret is None:
                return VType("bad", "bad")
            return self.vt_of_type(callee.ret)
        if op == "phi":
            known = [self.operand_type(v, env) for _, v in ins.incoming
                     if not isinstance(v, (Null, Const))]
            known = [t for t in known if t is not None]
            if not known:
                if all(isinstance(v, (Null, Const)) for _, v in ins.incoming):
                    return self.operand_type(ins.incoming[0][1], env)
                return None
            t = known[0]
            if t.is_ref and any(k.view != t.view for k in known):
                # disagreeing views meet at opaque
                return VType("ref", "ref", None)
            return t
        return None

    def check_kinds(self, fn: Function, ins: Instr, env):
        def bad(msg):
            self.err(ins.line, ins.col, "type", msg)

        def kind(op):
            t = self.operand_type(op, env)
            return t.kind if t else "bad"

        def need(op, k, what, view=None):
            if kind(op) != k:
                return bad(f"{what} must be {'a ref' if k == 'ref' else 'an integer'}")
            if k == "ref" and view is not None and not isinstance(op, Null):
                src = self.operand_type(op, env).view
                if src != view:
                    bad(f"{what} has view {_fmt(src)}, expected {_fmt(view)}; use an explicit cast")

        op = ins.op
        if ins.dest is not None and env[ins.dest].kind == "bad":
            if op == "load":
                base = self.operand_type(ins.args[0], env)
                if not base.is_ref:
                    return bad("load through a non-ref")
                if base.view is None:
                    return bad("load through an opaque ref needs a cast")
                try:
                    self.table.resolve_path(base.view, ins.path)
                except TypeError_ as e:
                    return bad(str(e))
            if op == "cast":
                return bad("integer cast target must be an integer type")
            if op == "call":
                return bad(f"{ins.callee} returns no value")
            return bad(f"ill-typed {op}")
        if op == "alloc":
            if ins.args:
                need(ins.args[0], "int", "allocation size")
                if isinstance(ins.args[0], Const) and ins.args[0].value <= 0:
                    bad("allocation size must be positive")
        elif op == "realloc":
            need(ins.args[0], "ref", "realloc operand")
            if len(ins.args) > 1:
                need(ins.args[1], "int", "realloc size")
                if isinstance(ins.args[1], Const) and ins.args[1].value <= 0:
                    bad("realloc size must be positive")
        elif op == "free":
            need(ins.args[0], "ref", "free operand")
        elif op == "gep":
            need(ins.args[0], "ref", "gep base")
            need(ins.args[1], "int", "gep offset")
        elif op == "cast":
            src = self.operand_type(ins.args[0], env)
            if not src.is_ref and ins.opaque:
                bad("only refs can be cast to opaque")
        elif op == "store":
            base = self.operand_type(ins.args[0], env)
            if base is None or not base.is_ref:
                return bad("store through a non-ref")
            if base.view is None:
                return bad("store through an opaque ref needs a cast")
            try:
                _, prim = self.table.resolve_path(base.view, ins.path)
            except TypeError_ as e:
                return bad(str(e))
            need(ins.args[1], "ref" if prim.tag == "ref" else "int", "stored value", prim.pointee)
        elif op == "arith":
            for a in ins.args:
                need(a, "int", "arithmetic operand")
        elif op == "cmp":
            ka, kb = kind(ins.args[0]), kind(ins.args[1])
            if ka != kb or ka not in ("int", "ref"):
                bad("comparison operands must have the same kind")
            elif ka == "ref" and ins.pred not in ("eq", "ne"):
                bad("refs only compare for equality")
        elif op == "br":
            need(ins.args[0], "int", "branch condition")
        elif op in ("call", "spawn"):
            callee = self.functions[ins.callee]
            if len(ins.args) != len(callee.params):
                return bad(f"{ins.callee} expects {len(callee.params)} arguments, got {len(ins.args)}")
            for a, p in zip(ins.args, callee.params):
                pv = self.vt_of_type(p.ty)
                need(a, pv.kind, f"argument {p.name!r} of {ins.callee}", pv.view if pv.is_ref else None)
        elif op == "ret":
            if fn.ret is None and ins.args:
                bad(f"{fn.name} returns no value")
            elif fn.ret is not None:
                if not ins.args:
                    bad(f"{fn.name} must return a value")
                else:
                    rv = self.vt_of_type(fn.ret)
                    need(ins.args[0], rv.kind, "return value", rv.view if rv.is_ref else None)
        elif op == "phi":
            k = env[ins.dest].kind
            for _, v in ins.incoming:
                need(v, k, "phi operand")

    def run(self) -> HirProgram:
        self.declare()
        sites: dict[str, AllocationSite] = {}
        vtypes: dict[str, dict[str, VType]] = {}
        self.check_globals(sites)
        for f, _ in self.raw_functions:
            self.check_function(f, sites, vtypes)
        self.flush()
        if any(p.lo is None for p in self.functions["main"].params
               if vtypes["main"][p.name].kind == "int"):
            f = self.functions["main"]
            self.err(f.line, 1, "type", "integer inputs of main need a range 'in LO..HI'")
        if any(vtypes["main"][p.name].kind != "int" for p in self.functions["main"].params):
            self.err(self.functions["main"].line, 1, "type", "main takes integer inputs only")
        self.flush()
        return HirProgram(
            self.typedefs, self.globals, self.functions, "main",
            table=self.table, vtypes=vtypes, sites=sites,
        )


def _fmt(view) -> str:
    from .types import format_type

    return format_type(view)


def _rpo_postorder(fn: Function) -> list[str]:
    """Postorder over all blocks, unreachable ones appended last."""
    from .indexes import postorder

    cfg = build_cfg(fn)
    out = postorder(cfg.succ, fn.blocks[0].label)
    rest = [b.label for b in fn.blocks if b.label not in out]
    return rest[::-1] + out


def validate(typedefs, globals_, functions) -> HirProgram:
    return _Checker(typedefs, globals_, functions).run()
