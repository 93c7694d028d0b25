"""Random programs for checking the classifier against the oracle.

Programs stay inside what the oracle can decide exhaustively: loops have
constant trip counts, at most two threads are spawned next to ``main`` and
the inputs span at most eight bits.  Each program is a chain of snippets,
each exercising one allocation pattern with randomly chosen sizes, offsets
and guards, so that both safe and violating variants come up.
"""

from __future__ import annotations

import os
import random
from dataclasses import dataclass, field

from .classifier import classify_all
from .config import Config
from .hir import parse_program
from .oracle import SOUNDNESS_KINDS, run_oracle

PRELUDE = """\
type Base = { tag: i32 }
type Half = { tag: i32, a: i32 }
type Whole = { tag: i32, a: i32, b: i64 }
type Ctr = { p: ref<i8> }
"""


class _Gen:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.funcs: list[str] = []
        self.globals: list[str] = []
        self.threads = 0
        self.k = 0
        self.inputs = [("n", 0, 15)]
        if rng.random() < 0.4:
            self.inputs.append(("m", 0, 3))

    def idx_expr(self, k, lines, size):
        """An index near the object's bounds, input-dependent or constant."""
        r = self.rng
        kind = r.randrange(4)
        if kind == 0:
            c = r.choice((0, size - 1, size, size + 1, -1))
            return str(c)
        name = r.choice(self.inputs)[0]
        if kind == 1:
            return name
        c = r.randrange(-3, size)
        if kind == 2:
            op = "add" if c >= 0 else "sub"
            lines.append(f"  i{k} = {op} {name}, {abs(c)}")
        else:
            lines.append(f"  i{k} = sub {c}, {name}")
        return f"i{k}"

    # -- snippets: each returns blocks starting at its own label, ending in ``jmp nxt``
    def buffer(self, k, nxt):
        r = self.rng
        size = r.randrange(2, 17)
        out = [f"s{k}:"]
        typed = r.random() < 0.3
        if typed:
            out.append(f"  p{k} = alloc i8[{size}]")
            out.append(f"  q{k} = cast p{k}, i8")
        else:
            out.append(f"  p{k} = alloc {size}")
            out.append(f"  q{k} = cast p{k}, i8")
        idx = self.idx_expr(k, out, size)
        guard = r.random()
        if guard < 0.35 and not idx.lstrip("-").isdigit():
            bound = r.choice((size, size - 1, size + 1))
            out.append(f"  g{k} = cmp lt {idx}, {bound}")
            out.append(f"  br g{k}, s{k}_l, {nxt}")
            out.append(f"s{k}_l:")
            if r.random() < 0.7:
                out.append(f"  h{k} = cmp ge {idx}, 0")
                out.append(f"  br h{k}, s{k}_a, {nxt}")
                out.append(f"s{k}_a:")
        out.append(f"  e{k} = gep q{k}, {idx}")
        if r.random() < 0.5:
            out.append(f"  store e{k}, 1")
        else:
            out.append(f"  v{k} = load e{k}")
        out.append(f"  jmp {nxt}")
        return out

    def loop(self, k, nxt):
        r = self.rng
        n = r.randrange(1, 9)
        trips = r.choice((n - 1, n, n, n + 1))
        step = r.choice((1, 1, 2))
        return [
            f"s{k}:",
            f"  a{k} = alloc i32[{n}]",
            f"  b{k} = cast a{k}, i32",
            f"  jmp s{k}_h",
            f"s{k}_h:",
            f"  i{k} = phi [s{k}: 0], [s{k}_b: j{k}]",
            f"  c{k} = cmp lt i{k}, {trips}",
            f"  br c{k}, s{k}_b, {nxt}",
            f"s{k}_b:",
            f"  e{k} = gep b{k}, i{k}",
            f"  store e{k}, 7",
            f"  j{k} = add i{k}, {step}",
            f"  jmp s{k}_h",
        ]

    def downcast(self, k, nxt):
        r = self.rng
        sel = r.choice(self.inputs)[0]
        half_tag = r.choice((2, 2, 2, 1))  # 1 mislabels the small object
        guarded = r.random() < 0.7
        out = [
            f"s{k}:",
            f"  c{k} = cmp eq {sel}, {r.randrange(0, 3)}",
            f"  br c{k}, s{k}_h, s{k}_w",
            f"s{k}_h:",
            f"  x{k} = alloc Half",
            f"  store x{k}.tag, {half_tag}",
            f"  bx{k} = cast x{k}, Base",
            f"  jmp s{k}_j",
            f"s{k}_w:",
            f"  y{k} = alloc Whole",
            f"  store y{k}.tag, 1",
            f"  by{k} = cast y{k}, Base",
            f"  jmp s{k}_j",
            f"s{k}_j:",
            f"  m{k} = phi [s{k}_h: bx{k}], [s{k}_w: by{k}]",
        ]
        if guarded:
            out += [f"  t{k} = load m{k}.tag", f"  u{k} = cmp eq t{k}, 1", f"  br u{k}, s{k}_d, {nxt}"]
        else:
            out += [f"  jmp s{k}_d"]
        out += [f"s{k}_d:", f"  d{k} = cast m{k}, Whole", f"  store d{k}.b, 5", f"  jmp {nxt}"]
        return out

    def realloc(self, k, nxt):
        r = self.rng
        s1 = r.randrange(2, 13)
        out = [f"s{k}:", f"  p{k} = alloc {s1}"]
        if r.random() < 0.3:
            name = r.choice(self.inputs)[0]
            out.append(f"  z{k} = add {name}, {r.randrange(1, 6)}")
            out.append(f"  r{k} = realloc p{k}, z{k}")
            s2 = 1
        else:
            s2 = r.choice((s1, s1 + 4, max(1, s1 - 2)))
            out.append(f"  r{k} = realloc p{k}, {s2}")
        out.append(f"  q{k} = cast r{k}, i8")
        off = r.choice((0, s2 - 1, s2, s1 - 1))
        out.append(f"  e{k} = gep q{k}, {off}")
        out.append(f"  store e{k}, 3")
        out.append(f"  jmp {nxt}")
        return out

    def dynamic(self, k, nxt):
        r = self.rng
        name = r.choice(self.inputs)[0]
        c = r.randrange(1, 4)
        off = r.randrange(0, 5)
        return [
            f"s{k}:",
            f"  z{k} = add {name}, {c}",
            f"  p{k} = alloc z{k}",
            f"  q{k} = cast p{k}, i8",
            f"  e{k} = gep q{k}, {off}",
            f"  v{k} = load e{k}",
            f"  jmp {nxt}",
        ]

    def negative(self, k, nxt):
        r = self.rng
        size = r.randrange(4, 12)
        fwd = r.randrange(0, 4)
        back = r.randrange(1, 6)
        return [
            f"s{k}:",
            f"  p{k} = alloc {size}",
            f"  q{k} = cast p{k}, i8",
            f"  f{k} = gep q{k}, {fwd}",
            f"  e{k} = gep f{k}, -{back}",
            f"  v{k} = load e{k}",
            f"  jmp {nxt}",
        ]

    def helper(self, k, nxt):
        r = self.rng
        size = r.randrange(2, 10)
        fname = f"get{k}"
        self.funcs.append(
            f"fn {fname}(p: ref<i8>, i: i64) -> i8 {{\nb0:\n  e = gep p, i\n  v = load e\n  ret v\n}}\n")
        out = [f"s{k}:", f"  p{k} = alloc {size}", f"  q{k} = cast p{k}, i8"]
        idx = self.idx_expr(k, out, size)
        if not idx.lstrip("-").isdigit():
            out.append(f"  w{k} = cast {idx}, i64")
            idx = f"w{k}"
        out += [f"  v{k} = call {fname}(q{k}, {idx})", f"  jmp {nxt}"]
        return out

    def memcell(self, k, nxt):
        r = self.rng
        size = r.randrange(2, 12)
        sel = r.choice(self.inputs)[0]
        off = r.randrange(0, size + 2)
        return [
            f"s{k}:",
            f"  c{k} = alloc Ctr",
            f"  p{k} = alloc {size}",
            f"  q{k} = cast p{k}, i8",
            f"  store c{k}.p, q{k}",
            f"  t{k} = cmp lt {sel}, {r.randrange(0, 4)}",
            f"  br t{k}, s{k}_m, s{k}_j",
            f"s{k}_m:",
            f"  f{k} = gep q{k}, {r.randrange(1, 4)}",
            f"  store c{k}.p, f{k}",
            f"  jmp s{k}_j",
            f"s{k}_j:",
            f"  l{k} = load c{k}.p",
            f"  e{k} = gep l{k}, {off}",
            f"  store e{k}, 4",
            f"  jmp {nxt}",
        ]

    def loopguard(self, k, nxt):
        r = self.rng
        size = r.randrange(2, 10)
        trips = r.randrange(1, 12)
        c0 = r.randrange(0, 4)
        bound = r.choice((size, size, size + 1))
        return [
            f"s{k}:",
            f"  p{k} = alloc {size}",
            f"  q{k} = cast p{k}, i8",
            f"  jmp s{k}_h",
            f"s{k}_h:",
            f"  i{k} = phi [s{k}: 0], [s{k}_n: j{k}]",
            f"  c{k} = cmp lt i{k}, {trips}",
            f"  br c{k}, s{k}_b, {nxt}",
            f"s{k}_b:",
            f"  x{k} = add i{k}, {c0}",
            f"  g{k} = cmp lt x{k}, {bound}",
            f"  br g{k}, s{k}_a, s{k}_n",
            f"s{k}_a:",
            f"  e{k} = gep q{k}, x{k}",
            f"  store e{k}, 1",
            f"  jmp s{k}_n",
            f"s{k}_n:",
            f"  j{k} = add i{k}, 1",
            f"  jmp s{k}_h",
        ]

    def shared(self, k, nxt):
        r = self.rng
        size = r.randrange(4, 14)
        out = [f"s{k}:", f"  p{k} = alloc {size}", f"  q{k} = cast p{k}, i8"]
        nthreads = r.randrange(1, 3)
        if r.random() < 0.5:
            g = f"G{k}"
            self.globals.append(f"global {g}: ref<Ctr>")
            out += [f"  c{k} = alloc Ctr", f"  store c{k}.p, q{k}", f"  store @{g}, c{k}"]
            for t in range(nthreads):
                step = r.randrange(1, 5)
                name = f"inc{k}_{t}"
                self.funcs.append(
                    f"fn {name}() {{\nb0:\n  c = load @{g}\n  q = load c.p\n  q2 = gep q, {step}\n"
                    f"  store c.p, q2\n  ret\n}}\n")
                out.append(f"  spawn {name}()")
            out += [f"  fin{k} = load c{k}.p", f"  store fin{k}, 1"]
        else:
            for t in range(nthreads):
                off = r.randrange(0, size + 2)
                name = f"put{k}_{t}"
                self.funcs.append(
                    f"fn {name}(p: ref<i8>) {{\nb0:\n  e = gep p, {off}\n  store e, 2\n  ret\n}}\n")
                out.append(f"  spawn {name}(q{k})")
        self.threads += nthreads
        out.append(f"  jmp {nxt}")
        return out

    def program(self) -> str:
        r = self.rng
        kinds = [self.buffer, self.buffer, self.loop, self.downcast, self.realloc,
                 self.dynamic, self.negative, self.helper, self.memcell, self.loopguard]
        chosen = [r.choice(kinds) for _ in range(r.randrange(1, 4))]
        if r.random() < 0.25:
            chosen.append(self.shared)
            self.inputs = self.inputs[:1]
            self.inputs[0] = ("n", 0, 3)
        body = []
        for k, snip in enumerate(chosen):
            nxt = f"s{k + 1}" if k + 1 < len(chosen) else "end"
            body += snip(k, nxt)
        params = ", ".join(f"{n}: i8 in {lo}..{hi}" for n, lo, hi in self.inputs)
        main = "fn main(" + params + ") {\n" + "\n".join(body) + "\nend:\n  ret\n}\n"
        parts = [PRELUDE] + [g + "\n" for g in self.globals] + self.funcs + [main]
        return "\n".join(parts)


def generate_program(rng: random.Random) -> str:
    """Source text of one random program."""
    return _Gen(rng).program()


@dataclass
class CaseResult:
    index: int
    source: str
    unsound: list[tuple[str, str]]  # (site, finding detail)
    unsafe: int
    unsafe_clean: int
    partial: bool


@dataclass
class FuzzResult:
    seed: int
    count: int
    cases: list[CaseResult] = field(default_factory=list)
    reproducers: list[str] = field(default_factory=list)

    @property
    def unsound(self) -> list[CaseResult]:
        return [c for c in self.cases if c.unsound]

    @property
    def ok(self) -> bool:
        return not self.unsound

    @property
    def precision(self) -> float:
        """Share of unsafe verdicts the oracle could not confirm (informational)."""
        unsafe = sum(c.unsafe for c in self.cases if not c.partial)
        clean = sum(c.unsafe_clean for c in self.cases if not c.partial)
        return clean / unsafe if unsafe else 0.0

    def summary(self) -> str:
        bad = sum(len(c.unsound) for c in self.cases)
        return (f"fuzz seed={self.seed} count={self.count}: {bad} Safe-but-violating sites, "
                f"unsafe-but-clean rate {self.precision:.3f}")


def case_seed(seed: int, index: int) -> int:
    return seed * 1_000_003 + index


def check_case(index: int, source: str, config: Config) -> CaseResult:
    p = parse_program(source)
    report = classify_all(p, config, source)
    oracle = run_oracle(p, cap=config.cap)
    unsound, unsafe, clean = [], 0, 0
    for s in report.sites:
        bad = [f for f in oracle.findings if f.site == s.id and f.kind in SOUNDNESS_KINDS]
        if s.safe:
            unsound += [(s.id, f"{f.kind} at {f.loc} with inputs {f.inputs}: {f.detail}") for f in bad[:1]]
        else:
            unsafe += 1
            clean += not bad
    return CaseResult(index, source, unsound, unsafe, clean, oracle.partial)


def _run_one(args):
    seed, index, config = args
    rng = random.Random(case_seed(seed, index))
    return check_case(index, generate_program(rng), config)


def run_fuzz(seed: int, count: int, config: Config | None = None, out_dir: str = ".",
             workers: int | None = None) -> FuzzResult:
    """Generate ``count`` programs and compare verdicts with the oracle.

    Every program with a Safe site the oracle shows violating is written to
    ``out_dir`` as a reproducer.
    """
    config = config or Config()
    workers = config.workers if workers is None else workers
    workers = workers or os.cpu_count() or 1
    jobs = [(seed, i, config) for i in range(count)]
    if workers > 1 and count > 1:
        import multiprocessing

        with multiprocessing.get_context("fork").Pool(workers) as pool:
            cases = pool.map(_run_one, jobs, chunksize=8)
    else:
        cases = [_run_one(j) for j in jobs]
    res = FuzzResult(seed, count, cases)
    for c in res.unsound:
        path = os.path.join(out_dir, f"fuzz-repro-{seed}-{c.index}.hir")
        with open(path, "w", encoding="utf-8") as fh:
            for site, detail in c.unsound:
                fh.write(f"; Safe site {site}: {detail}\n")
            fh.write(c.source)
        res.reproducers.append(path)
    return res
