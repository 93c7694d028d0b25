from __future__ import annotations

import pytest

from heapsafe.classifier import analyze_static, classify_all
from heapsafe.config import Config
from heapsafe.hir import parse_program
from heapsafe.intervals import Interval
from heapsafe.symexec import (
    BudgetExhausted, ExplorationBudget, PathCondition, enumerate_paths, is_feasible,
    prune_false_positives,
)

from conftest import corpus_program, corpus_source

DIAMOND = """
fn main(x: i64 in 0..5) {
b0:
  c = cmp lt x, 3
  br c, l, r
l:
  jmp j
r:
  jmp j
j:
  ret
}
"""

RECURSIVE = """
fn f(d: i64) -> i64 {
b0:
  c = cmp gt d, 0
  br c, r, z
r:
  e = sub d, 1
  v = call f(e)
  ret v
z:
  ret 0
}

fn main() {
b0:
  x = call f(10)
  ret
}
"""


def test_straight_line_has_one_unconstrained_path():
    p = parse_program("fn main() {\nb0:\n  ret\n}")
    (pc,) = enumerate_paths(p, "main", "b0", "b0")
    assert pc.constraints == ()


def test_diamond_splits_on_the_branch():
    pcs = enumerate_paths(parse_program(DIAMOND), "main", "b0", "j")
    assert sorted(str(pc) for pc in pcs) == ["{x<3}", "{x>=3}"]


def test_deep_recursion_exhausts_the_depth_budget():
    with pytest.raises(BudgetExhausted):
        enumerate_paths(parse_program(RECURSIVE), "main", "b0", "b0", ExplorationBudget(depth=4))


def test_path_budget():
    with pytest.raises(BudgetExhausted):
        enumerate_paths(parse_program(DIAMOND), "main", "b0", "j", ExplorationBudget(paths=1))


@pytest.mark.parametrize("constraints, want", [
    ([("x", "eq", 5), ("x", "lt", 3)], False),
    ([("x", "lt", 3), ("x", "gt", 0)], True),
    ([("tag", "eq", 1), ("tag", "eq", 2)], False),
    ([], True),
])
def test_feasibility(constraints, want):
    pc = PathCondition()
    for c in constraints:
        pc = pc.add(*c)
    assert is_feasible(pc) is want


def test_feasibility_follows_linked_names():
    # y = x + 2 with x < 3 rules out y == 9
    pc = PathCondition().add("x", "lt", 3).link("y", "x", 2).add("y", "eq", 9)
    assert not is_feasible(pc, {"x": Interval(0, 10), "y": Interval(0, 20)})
    assert is_feasible(pc.add("y", "eq", 4), {"x": Interval(0, 10)}) is False
    assert is_feasible(PathCondition().add("x", "lt", 3).link("y", "x", 2).add("y", "eq", 4))


def test_cyclic_constraints_need_bounded_domains():
    pc = PathCondition().add("x", "lt", "y").add("y", "lt", "x")
    # unbounded names cannot be narrowed, so the check stays conservative
    assert is_feasible(pc)
    assert not is_feasible(pc, {"x": Interval(0, 4), "y": Interval(0, 4)})


def verdicts(name, **budget):
    p = corpus_program(name)
    st = analyze_static(p)
    return st, prune_false_positives(p, st, ExplorationBudget(**budget))


def test_guarded_downcast_flips():
    st, out = verdicts("guarded_downcast")
    for sid in ("main:x", "main:y"):
        assert st.verdicts[sid].verdict == "Unsafe"
        assert out[sid].safe and out[sid].stage == "symexec"
        assert out[sid].allocated_type is not None


def test_reachable_overflow_stays_unsafe():
    _, out = verdicts("off_by_one_loop")
    assert not any(v.safe for v in out.values())


def test_exhausted_budget_keeps_the_static_verdict():
    st, out = verdicts("guarded_downcast", paths=1)
    assert out == st.verdicts


def test_structural_reasons_are_never_refined():
    _, out = verdicts("dynamic_size")
    assert all(not v.safe for v in out.values())


def test_symexec_can_be_switched_off():
    p = corpus_program("checked_offset")
    assert classify_all(p).sites[0].stage == "symexec"
    assert not classify_all(p, Config(symexec=False)).sites[0].safe


def test_infeasible_overflow_is_pruned():
    r = classify_all(parse_program(corpus_source("infeasible_overflow")))
    assert all(s.safe for s in r.sites)
