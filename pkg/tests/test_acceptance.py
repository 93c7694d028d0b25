"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

from __future__ import annotations

import io
import itertools
import random
import time

import pytest

from heapsafe.allocator import HeapState, in_unsafe_region, random_trace, replay_trace
from heapsafe.classifier import analyze_static, classify_all
from heapsafe.cli import cmd_oracle, cmd_run
from heapsafe.config import Config
from heapsafe.fuzz import run_fuzz
from heapsafe.hir import ArrayType, NamedType, PrimType, Typedef, TypeTable, parse_program
from heapsafe.oracle import run_oracle
from heapsafe.shared import accumulated_index
from heapsafe.symexec import ExplorationBudget, prune_false_positives
from heapsafe.typecheck import is_compatible_cast

from conftest import CORPUS, TRACES, corpus_labels, corpus_source


@pytest.fixture
def verdict(capsys):
    def emit(name: str, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\nACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, detail
    return emit


def test_soundness_fuzzing(verdict, tmp_path):
    t0 = time.perf_counter()
    res = run_fuzz(0, 1000, Config(), str(tmp_path))
    took = time.perf_counter() - t0
    bad = sum(len(c.unsound) for c in res.cases)
    partial = sum(c.partial for c in res.cases)
    ok = len(res.cases) == 1000 and bad == 0 and partial == 0 and took < 300
    verdict("soundness-fuzzing", ok,
            f"1000 programs, {bad} Safe-but-violating sites, {partial} without ground truth, {took:.1f}s")


def test_corpus_ground_truth(verdict):
    labels = corpus_labels()
    mismatches, unconfirmed = [], []
    n_sites = 0
    for name in sorted(labels):
        path = str(CORPUS / name)
        src = corpus_source(name.removesuffix(".hir"))
        report = classify_all(parse_program(src), Config(), src)
        oracle = cmd_oracle(path, Config(), out=io.StringIO())
        for sid, lab in labels[name].items():
            n_sites += 1
            v = report.site(sid)
            if (v.verdict, v.reasons, v.stage) != (lab["verdict"], lab["reasons"], lab["stage"]):
                mismatches.append(f"{name}:{sid}")
            seen = "clean" if oracle.clean(sid) else "violation"
            if oracle.partial or seen != lab["oracle"] or (lab["verdict"] == "Safe" and seen != "clean"):
                unconfirmed.append(f"{name}:{sid}")
        if {s.id for s in report.sites} != set(labels[name]):
            mismatches.append(name)
    ok = len(labels) >= 30 and not mismatches and not unconfirmed
    verdict("corpus-ground-truth", ok,
            f"{len(labels)} programs, {n_sites} sites, label mismatches {mismatches}, "
            f"oracle disagreements {unconfirmed}")


def test_shared_accumulation_micro_example(verdict):
    src = corpus_source("shared_accum_overflow")
    progs = {n: parse_program(src.replace("alloc 8", f"alloc {n}")) for n in (8, 9)}
    st = analyze_static(progs[8])
    (cc,) = st.analysis.site_objects("main:cc")
    acc = accumulated_index(st.analysis, cc, 0)
    v8 = classify_all(progs[8]).site("main:buf")
    v9 = classify_all(progs[9]).site("main:buf")
    o8, o9 = run_oracle(progs[8]), run_oracle(progs[9])
    (f8,) = [f for f in o8.findings if f.site == "main:buf"]
    ok = (acc.hi == 8 and v9.verdict == "Safe" and v8.verdict == "Unsafe"
          and v8.reasons == ["shared-out-of-bounds"] and o9.clean("main:buf")
          and f8.detail.startswith("[8, 9)"))
    verdict("shared-accumulation", ok,
            f"accumulated index {acc} (max {acc.hi}), size 9 {v9.verdict}, size 8 {v8.verdict} "
            f"{v8.reasons}, oracle {f8.detail}")


def test_allocator_invariants(verdict):
    t = TypeTable({
        "A": Typedef("A", (("x", PrimType("i64")), ("y", PrimType("i64")))),
        "B": Typedef("B", (("x", PrimType("i32")),)),
        "C": Typedef("C", (("a", PrimType("i8")), ("p", PrimType("ref")), ("n", PrimType("i64")))),
        "D": Typedef("D", tuple((f, PrimType("i64")) for f in "abcd")),
    })
    types = [t.allocated_type(NamedType(n)) for n in "ABCD"]
    reg = {x.type_hash: x for x in types}
    total_viol, escaped, events = 0, 0, 0
    t0 = time.perf_counter()
    for seed in range(10):
        trace = random_trace(random.Random(seed), 100_000, types)
        rep = replay_trace(HeapState(), trace, reg)
        total_viol += len(rep.violations) + len(rep.errors)
        events += len(rep.outcomes)
        escaped += sum(1 for o in rep.outcomes if o["outcome"] == "masked"
                       and not in_unsafe_region(int(o["address"], 16)))
    took = time.perf_counter() - t0
    ok = events == 1_000_000 and total_viol == 0 and escaped == 0 and took < 60
    verdict("allocator-invariants", ok,
            f"10 traces x 1e5 events, {total_viol} violations, {escaped} escaped accesses, {took:.1f}s")


def test_temporal_exploit_containment(verdict):
    victim = str(TRACES / "victim.hir")

    def run(name, pools=True):
        return cmd_run(victim, str(TRACES / f"{name}.jsonl"), Config(), out=io.StringIO(),
                       pools_enabled=pools)

    uaf, df, ubi = run("uaf"), run("double_free"), run("ubi")
    control = run("uaf", pools=False)
    zero = [o for o in ubi.outcomes if o["outcome"] == "ubi-zero-read"]
    ok = (uaf.ok and uaf.count("type-preserved-reuse") > 0 and uaf.count("type-confused-reuse") == 0
          and df.count("double-free") == 1 and df.ok
          and bool(zero) and all(set(o["value"]) == {"0"} for o in zero) and ubi.ok
          and not control.ok and control.count("type-confused-reuse") > 0)
    verdict("temporal-containment", ok,
            f"uaf {uaf.count('type-preserved-reuse')} type-preserved reuses, "
            f"double-free {df.count('double-free')} detected, ubi {len(zero)} all-zero reads, "
            f"control build {len(control.violations)} type-preservation violations")


BUDGETS = list(itertools.product(range(5), range(4), (1, 4, 16, 256, 4096)))


def test_symexec_refinement_laws(verdict):
    labels = corpus_labels()
    wrong_flip, lost_safe, non_monotone, flips_seen = [], [], [], 0
    for name in sorted(labels):
        p = parse_program(corpus_source(name.removesuffix(".hir")))
        st = analyze_static(p)
        oracle = run_oracle(p)
        flips = {}
        for b in BUDGETS:
            out = prune_false_positives(p, st, ExplorationBudget(*b))
            flips[b] = {s for s, v in out.items() if v.safe and not st.verdicts[s].safe}
            lost_safe += [f"{name}:{s}" for s, v in st.verdicts.items() if v.safe and not out[s].safe]
            wrong_flip += [f"{name}:{s}@{b}" for s in flips[b] if not oracle.clean(s)]
        for d, u, pa in BUDGETS:
            for nb in ((d + 1, u, pa), (d, u + 1, pa)) + tuple(
                    (d, u, q) for q in (4, 16, 256, 4096) if q > pa):
                if nb in flips and not flips[(d, u, pa)] <= flips[nb]:
                    non_monotone.append(f"{name}:{(d, u, pa)}->{nb}")
        flips_seen += len(flips[(4, 2, 4096)])
    ok = not wrong_flip and not lost_safe and not non_monotone and flips_seen > 0
    verdict("symexec-laws", ok,
            f"{len(labels)} programs x {len(BUDGETS)} budgets, {flips_seen} flips at defaults, "
            f"bad flips {wrong_flip[:3]}, Safe->Unsafe {lost_safe[:3]}, non-monotone {non_monotone[:3]}")


# random record types, laid out here independently of the type table
PRIMS = {"i8": 1, "i16": 2, "i32": 4, "i64": 8, "ref": 8}


def _rand_fields(rng, depth=0):
    out = []
    for _ in range(rng.randint(1, 4)):
        r = rng.random()
        if r < 0.15 and depth < 2:
            out.append(("rec", _rand_fields(rng, depth + 1)))
        elif r < 0.3:
            out.append(("arr", rng.choice(list(PRIMS)), rng.randint(1, 3)))
        else:
            out.append(("prim", rng.choice(list(PRIMS))))
    return out


def _flat(fields, base=0):
    out = []
    for f in fields:
        if f[0] == "prim":
            out.append((base, f[1]))
            base += PRIMS[f[1]]
        elif f[0] == "arr":
            for _ in range(f[2]):
                out.append((base, f[1]))
                base += PRIMS[f[1]]
        else:
            sub = _flat(f[1], base)
            out += sub
            base = sub[-1][0] + PRIMS[sub[-1][1]]
    return out


class _Types:
    def __init__(self):
        self.src = []
        self.n = 0

    def record(self, fields):
        members = []
        for f in fields:
            if f[0] == "prim":
                members.append(PrimType(f[1]))
            elif f[0] == "arr":
                members.append(ArrayType(PrimType(f[1]), f[2]))
            else:
                members.append(NamedType(self.record(f[1])))
        self.n += 1
        name = f"R{self.n}"
        self.src.append(Typedef(name, tuple((f"f{i}", m) for i, m in enumerate(members))))
        return name

    def table(self):
        return TypeTable({td.name: td for td in self.src})


def _mutate(rng, fields):
    # a truncation, or the same shape with one primitive swapped
    fields = list(fields)
    i = rng.randrange(len(fields))
    if rng.random() < 0.5 and len(fields) > 1:
        return fields[: i + 1]
    if fields[i][0] == "prim":
        fields[i] = ("prim", rng.choice(list(PRIMS)))
    return fields


def test_cast_lattice(verdict):
    rng = random.Random(2024)
    pairs = []
    reg = _Types()
    for _ in range(10_000):
        fa = _rand_fields(rng)
        fb = _mutate(rng, fa) if rng.random() < 0.6 else _rand_fields(rng)
        pairs.append((fa, fb, reg.record(fa), reg.record(fb)))
    table = reg.table()
    layout_bad = not_refl = wrong = not_trans = 0
    positives = 0
    ats = {}

    def at(name):
        if name not in ats:
            ats[name] = table.allocated_type(NamedType(name))
        return ats[name]

    for fa, fb, na, nb in pairs:
        a, b = at(na), at(nb)
        la, lb = _flat(fa), _flat(fb)
        if list(a.layout) != la or list(b.layout) != lb:
            layout_bad += 1
        if not is_compatible_cast(a, a):
            not_refl += 1
        differs = len(lb) > len(la) or any(x != y for x, y in zip(la, lb))
        got = is_compatible_cast(a, b)
        positives += got
        if got == differs:
            wrong += 1
        # a -> b -> any truncation of b must compose
        if got:
            small = lb[: rng.randint(1, len(lb))]
            if not is_compatible_cast(b, small) or not is_compatible_cast(a, small):
                not_trans += 1
    ok = not (layout_bad or not_refl or wrong or not_trans) and positives > 1000
    verdict("cast-lattice", ok,
            f"10000 pairs ({positives} compatible), layout mismatches {layout_bad}, "
            f"reflexivity failures {not_refl}, prefix-rule failures {wrong}, "
            f"transitivity failures {not_trans}")
