"""CFGs, dominators, def-use chains, loops and execution-count bounds."""

from __future__ import annotations

from dataclasses import dataclass, field

from .ir import Const, Function, HirProgram, Var

MAX_TRIPS = 1024


@dataclass
class CFG:
    nodes: list[str]
    succ: dict[str, list[str]]
    pred: dict[str, list[str]]

    @property
    def edges(self) -> list[tuple[str, str]]:
        return [(a, b) for a in self.nodes for b in self.succ[a]]


def build_cfg(fn: Function) -> CFG:
    nodes = [b.label for b in fn.blocks]
    succ = {n: [] for n in nodes}
    pred = {n: [] for n in nodes}
    for b in fn.blocks:
        term = b.instrs[-1] if b.instrs else None
        if term is None or term.op not in ("br", "jmp"):
            continue
        for t in term.labels:
            if t not in succ[b.label]:
                succ[b.label].append(t)
                pred[t].append(b.label)
    return CFG(nodes, succ, pred)


def postorder(succ: dict[str, list[str]], root: str) -> list[str]:
    out: list[str] = []
    seen = {root}
    stack = [(root, iter(succ[root]))]
    while stack:
        node, it = stack[-1]
        for s in it:
            if s not in seen:
                seen.add(s)
                stack.append((s, iter(succ[s])))
                break
        else:
            stack.pop()
            out.append(node)
    return out


def dominators(cfg: CFG, entry: str) -> dict[str, set[str]]:
    order = list(reversed(postorder(cfg.succ, entry)))
    reach = set(order)
    dom = {n: set(order) for n in order}
    dom[entry] = {entry}
    changed = True
    while changed:
        changed = False
        for n in order:
            if n == entry:
                continue
            preds = [p for p in cfg.pred[n] if p in reach]
            new = set.intersection(*(dom[p] for p in preds)) if preds else set()
            new = new | {n}
            if new != dom[n]:
                dom[n] = new
                changed = True
    return dom


def immediate_dominators(dom: dict[str, set[str]]) -> dict[str, str | None]:
    idom: dict[str, str | None] = {}
    for n, ds in dom.items():
        strict = ds - {n}
        idom[n] = None
        for c in strict:
            if all(c == o or o in dom[c] for o in strict):
                idom[n] = c
                break
    return idom


def strongly_connected(cfg: CFG) -> list[set[str]]:
    """Tarjan's SCCs, iterative."""
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on: set[str] = set()
    stack: list[str] = []
    out: list[set[str]] = []
    counter = 0
    for root in cfg.nodes:
        if root in index:
            continue
        work = [(root, 0)]
        while work:
            node, i = work.pop()
            if i == 0:
                index[node] = low[node] = counter
                counter += 1
                stack.append(node)
                on.add(node)
            succs = cfg.succ[node]
            if i < len(succs):
                work.append((node, i + 1))
                s = succs[i]
                if s not in index:
                    work.append((s, 0))
                elif s in on:
                    low[node] = min(low[node], index[s])
                continue
            if low[node] == index[node]:
                comp = set()
                while True:
                    w = stack.pop()
                    on.discard(w)
                    comp.add(w)
                    if w == node:
                        break
                out.append(comp)
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
    return out


@dataclass
class Loop:
    header: str
    body: set[str]
    latches: list[str]
    trips: int | None = None
    # induction variable: (phi name, initial value, step) when trips is known
    induction: tuple[str, int, int] | None = None

    def body_values(self) -> tuple[int, int, int] | None:
        """(lo, hi, stride) of the induction variable inside the body, if any iteration runs."""
        if self.induction is None or not self.trips:
            return None
        _, init, step = self.induction
        last = init + (self.trips - 1) * step
        return min(init, last), max(init, last), abs(step)


@dataclass
class FunctionIndex:
    fn: Function
    cfg: CFG
    dom: dict[str, set[str]]
    idom: dict[str, str | None]
    defs: dict[str, tuple[str, int]]
    uses: dict[str, list[tuple[str, int]]]
    loops: dict[str, Loop]
    sccs: list[set[str]]
    irreducible: bool = False
    reachable: set[str] = field(default_factory=set)

    def dominates(self, a: str, b: str) -> bool:
        return a in self.dom.get(b, ())

    def scc_of(self, label: str) -> set[str]:
        for c in self.sccs:
            if label in c:
                return c
        return {label}

    def in_cycle(self, label: str) -> bool:
        comp = self.scc_of(label)
        return len(comp) > 1 or label in self.cfg.succ[label]

    def block_multiplicity(self, label: str) -> int | None:
        """Upper bound on executions of a block per function invocation."""
        if label not in self.reachable:
            return 0
        if self.irreducible and self.in_cycle(label):
            return None
        mult = 1
        for lp in self.loops.values():
            if label not in lp.body:
                continue
            if lp.trips is None:
                return None
            mult *= lp.trips + 1 if label == lp.header else lp.trips
        return mult


def _const_of(fn: Function, defs, op):
    """Literal value of an operand, following assign chains."""
    seen = set()
    while isinstance(op, Var) and op.name not in seen:
        seen.add(op.name)
        loc = defs.get(op.name)
        if loc is None or loc[1] < 0:
            return None
        ins = fn.block(loc[0]).instrs[loc[1]]
        if ins.op != "assign":
            return None
        op = ins.args[0]
    return op.value if isinstance(op, Const) else None


_CMP = {
    "lt": lambda a, b: a < b, "le": lambda a, b: a <= b,
    "gt": lambda a, b: a > b, "ge": lambda a, b: a >= b,
    "eq": lambda a, b: a == b, "ne": lambda a, b: a != b,
}


def _trip_count(fn: Function, defs, lp: Loop):
    """(trips, (phi, init, step)) for a counted loop, else (None, None)."""
    if len(lp.latches) != 1:
        return None, None
    header = fn.block(lp.header)
    term = header.terminator
    if term.op != "br" or not isinstance(term.args[0], Var):
        return None, None
    t, f = term.labels
    if (t in lp.body) == (f in lp.body):
        return None, None
    stay_when = t in lp.body
    cloc = defs.get(term.args[0].name)
    if cloc is None or cloc[0] != lp.header or cloc[1] < 0:
        return None, None
    cmp = header.instrs[cloc[1]]
    if cmp.op != "cmp":
        return None, None
    a, b = cmp.args
    for ind, bound, flipped in ((a, b, False), (b, a, True)):
        if not isinstance(ind, Var):
            continue
        iloc = defs.get(ind.name)
        if iloc is None or iloc[0] != lp.header or iloc[1] < 0:
            continue
        phi = header.instrs[iloc[1]]
        if phi.op != "phi" or len(phi.incoming) != 2:
            continue
        inc = dict(phi.incoming)
        latch = lp.latches[0]
        pre = [lab for lab, _ in phi.incoming if lab != latch]
        if latch not in inc or len(pre) != 1:
            continue
        init = _const_of(fn, defs, inc[pre[0]])
        limit = _const_of(fn, defs, bound)
        nxt = inc[latch]
        if init is None or limit is None or not isinstance(nxt, Var):
            continue
        nloc = defs.get(nxt.name)
        if nloc is None or nloc[1] < 0:
            continue
        step_ins = fn.block(nloc[0]).instrs[nloc[1]]
        if step_ins.op != "arith" or step_ins.pred not in ("add", "sub"):
            continue
        x, y = step_ins.args
        if x == ind:
            step = _const_of(fn, defs, y)
        elif y == ind and step_ins.pred == "add":
            step = _const_of(fn, defs, x)
        else:
            continue
        if step is None:
            continue
        if step_ins.pred == "sub":
            step = -step
        i = init
        trips = 0
        while True:
            res = _CMP[cmp.pred](limit, i) if flipped else _CMP[cmp.pred](i, limit)
            if res != stay_when:
                return trips, (ind.name, init, step)
            trips += 1
            i += step
            if trips > MAX_TRIPS:
                return None, None
    return None, None


def index_function(fn: Function) -> FunctionIndex:
    cfg = build_cfg(fn)
    entry = fn.blocks[0].label
    dom = dominators(cfg, entry)
    reachable = set(dom)
    for n in cfg.nodes:
        dom.setdefault(n, set(cfg.nodes))
    idom = immediate_dominators({n: d for n, d in dom.items() if n in reachable})
    defs: dict[str, tuple[str, int]] = {p.name: (entry, -1) for p in fn.params}
    uses: dict[str, list[tuple[str, int]]] = {}
    for label, i, ins in fn.instructions():
        if ins.dest is not None:
            defs[ins.dest] = (label, i)
        for u in ins.uses():
            lst = uses.setdefault(u, [])
            if (label, i) not in lst:
                lst.append((label, i))
    loops: dict[str, Loop] = {}
    irreducible = False
    for a, b in cfg.edges:
        if a not in reachable:
            continue
        if b in dom[a]:
            lp = loops.setdefault(b, Loop(b, {b}, []))
            lp.latches.append(a)
            work = [a]
            while work:
                n = work.pop()
                if n not in lp.body:
                    lp.body.add(n)
                    work.extend(p for p in cfg.pred[n] if p in reachable)
    sccs = strongly_connected(cfg)
    for comp in sccs:
        if len(comp) > 1 and not any(h in comp for h in loops):
            irreducible = True
    for comp in sccs:
        headers = [h for h in loops if h in comp]
        covered = set().union(*(loops[h].body for h in headers)) if headers else set()
        if len(comp) > 1 and not comp <= covered:
            irreducible = True
    for lp in loops.values():
        lp.trips, lp.induction = _trip_count(fn, defs, lp)
    return FunctionIndex(fn, cfg, dom, idom, defs, uses, loops, sccs, irreducible, reachable)


@dataclass
class ProgramIndex:
    functions: dict[str, FunctionIndex]
    calls: dict[str, list[tuple[str, tuple[str, int]]]]  # callee -> [(caller, loc)]
    spawns: dict[str, list[tuple[str, tuple[str, int]]]]

    def __getitem__(self, name: str) -> FunctionIndex:
        return self.functions[name]


def build_indexes(p: HirProgram) -> ProgramIndex:
    fidx = {name: index_function(f) for name, f in p.functions.items()}
    calls: dict[str, list] = {name: [] for name in p.functions}
    spawns: dict[str, list] = {name: [] for name in p.functions}
    for name, f in p.functions.items():
        for label, i, ins in f.instructions():
            if ins.op == "call":
                calls[ins.callee].append((name, (label, i)))
            elif ins.op == "spawn":
                spawns[ins.callee].append((name, (label, i)))
    return ProgramIndex(fidx, calls, spawns)


class ExecCounts:
    """Upper bounds on how often functions and instructions run.

    Thread roots are the entry function (one instance) and every function
    named by a spawn; a spawned root runs once per execution of each spawn
    instruction naming it.  ``None`` stands for an unknown (non-constant)
    count.
    """

    def __init__(self, p: HirProgram, idx: ProgramIndex):
        self.p = p
        self.idx = idx
        self._fn_cache: dict[tuple[str, str], int | None] = {}
        self._root_cache: dict[str, int | None] = {}

    def roots(self) -> list[str]:
        out = [self.p.entry]
        for f in self.p.functions:
            if self.idx.spawns[f] and f not in out:
                out.append(f)
        return out

    def invocations(self, root: str, fn: str, _stack=()) -> int | None:
        """Executions of ``fn`` within one run of the thread rooted at ``root``."""
        key = (root, fn)
        if key in self._fn_cache:
            return self._fn_cache[key]
        if fn in _stack:
            return None
        total = 1 if fn == root else 0
        for caller, (label, _) in self.idx.calls[fn]:
            c = self.invocations(root, caller, _stack + (fn,))
            m = self.idx[caller].block_multiplicity(label)
            if c == 0 or m == 0:
                continue
            if c is None or m is None:
                total = None
                break
            total += c * m
        if not _stack:
            self._fn_cache[key] = total
        return total

    def root_instances(self, root: str, _stack=()) -> int | None:
        if root == self.p.entry and not self.idx.spawns[root]:
            return 1
        if root in self._root_cache:
            return self._root_cache[root]
        if root in _stack:
            return None
        total = 1 if root == self.p.entry else 0
        for spawner, (label, _) in self.idx.spawns[root]:
            for r in self.roots():
                inv = self.invocations(r, spawner)
                if inv == 0:
                    continue
                inst = self.root_instances(r, _stack + (root,))
                m = self.idx[spawner].block_multiplicity(label)
                if inv is None or inst is None or m is None:
                    total = None
                    break
                total += inst * inv * m
            if total is None:
                break
        if not _stack:
            self._root_cache[root] = total
        return total

    def instr_count(self, fn: str, label: str) -> int | None:
        """Total executions of a block of ``fn`` over all threads."""
        total = 0
        m = self.idx[fn].block_multiplicity(label)
        if m == 0:
            return 0
        for r in self.roots():
            inv = self.invocations(r, fn)
            if inv == 0:
                continue
            inst = self.root_instances(r)
            if inv is None or inst is None or m is None:
                return None
            total += inst * inv * m
        return total
