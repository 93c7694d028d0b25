from __future__ import annotations

import random

from heapsafe.config import Config
from heapsafe.fuzz import case_seed, check_case, generate_program, run_fuzz
from heapsafe.hir import parse_program
from heapsafe.oracle import run_oracle


def test_generator_is_deterministic_and_parses():
    for i in range(40):
        a = generate_program(random.Random(i))
        assert a == generate_program(random.Random(i))
        parse_program(a)


def test_generated_programs_stay_in_the_checkable_fragment():
    for i in range(60):
        p = parse_program(generate_program(random.Random(case_seed(3, i))))
        res = run_oracle(p)
        assert not res.partial
        assert res.threads <= 3
        bits = sum((prm.hi - prm.lo).bit_length() for prm in p.functions[p.entry].params
                   if prm.lo is not None)
        assert bits <= 8


def test_check_case_counts_verdicts():
    src = generate_program(random.Random(5))
    c = check_case(0, src, Config())
    assert c.unsound == [] and c.unsafe >= c.unsafe_clean


def test_parallel_and_serial_runs_agree(tmp_path):
    a = run_fuzz(2, 16, Config(), str(tmp_path), workers=1)
    b = run_fuzz(2, 16, Config(), str(tmp_path), workers=2)
    assert [c.source for c in a.cases] == [c.source for c in b.cases]
    assert a.ok and b.ok and a.summary() == b.summary()
