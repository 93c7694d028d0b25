from __future__ import annotations

import json

import pytest

from heapsafe.classifier import STRUCTURAL, classify_all
from heapsafe.config import Config
from heapsafe.hir import parse_program
from heapsafe.oracle import run_oracle

from conftest import corpus_labels, corpus_source

LABELS = corpus_labels()


@pytest.mark.parametrize("name", sorted(LABELS))
def test_corpus_verdicts_match_labels(name):
    src = corpus_source(name.removesuffix(".hir"))
    report = classify_all(parse_program(src), Config(), src)
    assert {s.id for s in report.sites} == set(LABELS[name])
    for sid, lab in LABELS[name].items():
        v = report.site(sid)
        assert (v.verdict, v.reasons, v.stage) == (lab["verdict"], lab["reasons"], lab["stage"]), sid


def test_corpus_covers_every_pattern():
    assert len(LABELS) >= 30
    names = set(LABELS)
    for must in ("const_buffer", "unchecked_offset", "realloc_grow", "realloc_shrink",
                 "shared_accum_safe", "upcast_prefix", "upcast_embedded", "guarded_downcast",
                 "delayed_typing", "global_uninit_alias"):
        assert f"{must}.hir" in names
    verdicts = [lab["verdict"] for sites in LABELS.values() for lab in sites.values()]
    assert "Safe" in verdicts and "Unsafe" in verdicts


def test_report_json_is_deterministic():
    src = corpus_source("guarded_downcast")
    a = classify_all(parse_program(src), Config(), src).dumps()
    b = classify_all(parse_program(src), Config(), src).dumps()
    assert a == b
    d = json.loads(a)
    assert list(d) == sorted(d)
    assert d["summary"] == {"safe": 2, "unsafe": 0, "symexec_flips": 2}
    assert [s["id"] for s in d["sites"]] == ["main:x", "main:y"]
    assert d["sites"][0]["allocated_type"]["size"] == 8


def test_safe_sites_carry_their_type():
    for name in ("const_buffer", "upcast_prefix", "delayed_typing"):
        for s in classify_all(parse_program(corpus_source(name))).sites:
            if s.safe:
                assert s.allocated_type is not None


def test_structural_reasons_are_stable_under_symexec():
    for name, sites in LABELS.items():
        for sid, lab in sites.items():
            if set(lab["reasons"]) & STRUCTURAL:
                assert lab["stage"] == "static" and lab["verdict"] == "Unsafe"


def test_safe_sites_on_the_corpus_are_oracle_clean():
    for name, sites in LABELS.items():
        res = run_oracle(parse_program(corpus_source(name.removesuffix(".hir"))))
        for sid, lab in sites.items():
            if lab["verdict"] == "Safe":
                assert res.clean(sid), (name, sid)
