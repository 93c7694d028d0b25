from __future__ import annotations

import json
import os

import pytest

from heapsafe import spatial
from heapsafe.cli import main

from conftest import CORPUS, TRACES

VICTIM = str(TRACES / "victim.hir")


def corpus(name):
    return str(CORPUS / f"{name}.hir")


def trace(name):
    return str(TRACES / f"{name}.jsonl")


def test_analyze_prints_one_line_per_site(capsys, tmp_path):
    out = tmp_path / "r.json"
    assert main(["analyze", corpus("upcast_prefix"), "--json", str(out)]) == 0
    assert "main:r" in capsys.readouterr().out
    d = json.loads(out.read_text())
    assert d["summary"]["safe"] == 1 and d["sites"][0]["verdict"] == "Safe"


def test_analyze_realloc_shrink(tmp_path):
    out = tmp_path / "r.json"
    assert main(["analyze", corpus("realloc_shrink"), "--json", str(out)]) == 0
    (site,) = json.loads(out.read_text())["sites"]
    assert site["verdict"] == "Unsafe" and site["reasons"] == ["realloc-shrink"]


def test_reports_are_byte_identical(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["analyze", corpus("guarded_downcast"), "--json", str(a)])
    main(["analyze", corpus("guarded_downcast"), "--json", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_missing_file_exits_two_without_a_report(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["analyze", str(tmp_path / "nope.hir"), "--json", str(out)]) == 2
    assert not out.exists()
    assert "nope.hir" in capsys.readouterr().err


def test_parse_errors_exit_two(tmp_path):
    bad = tmp_path / "bad.hir"
    bad.write_text("fn main( {\n")
    assert main(["analyze", str(bad)]) == 2


def test_run_uaf_is_contained(tmp_path):
    out = tmp_path / "t.json"
    assert main(["run", VICTIM, trace("uaf"), "--json", str(out)]) == 0
    outcomes = [o["outcome"] for o in json.loads(out.read_text())["outcomes"]]
    assert "type-preserved-reuse" in outcomes


def test_run_without_pools_fails(tmp_path):
    assert main(["run", VICTIM, trace("uaf"), "--no-pools"]) == 1


def test_run_unknown_site_is_a_schema_error(tmp_path):
    t = tmp_path / "t.jsonl"
    t.write_text('{"op": "alloc", "site": "main:nope", "handle": "a"}\n')
    assert main(["run", VICTIM, str(t)]) == 2


def test_run_empty_trace(tmp_path):
    out = tmp_path / "t.json"
    assert main(["run", VICTIM, trace("empty"), "--json", str(out)]) == 0
    assert json.loads(out.read_text())["outcomes"] == []


def test_oracle_findings(tmp_path):
    out = tmp_path / "o.json"
    assert main(["oracle", corpus("in_bounds_loop"), "--json", str(out)]) == 0
    assert json.loads(out.read_text())["findings"] == []
    assert main(["oracle", corpus("off_by_one_loop"), "--json", str(out)]) == 0
    (f,) = json.loads(out.read_text())["findings"]
    assert f["kind"] == "oob" and f["site"] == "main:a"
    assert main(["oracle", corpus("guarded_downcast"), "--json", str(out)]) == 0
    assert json.loads(out.read_text())["findings"] == []


def test_fuzz_small_run(tmp_path):
    assert main(["fuzz", "--seed", "1", "--count", "100", "--workers", "1",
                 "--out", str(tmp_path)]) == 0
    assert os.listdir(tmp_path) == []
    assert main(["fuzz", "--count", "0"]) == 0


def test_fuzz_finds_the_injected_bug(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(spatial, "SKIP_NEGATIVE_CHECK", True)
    assert main(["fuzz", "--seed", "0", "--count", "60", "--workers", "1",
                 "--out", str(tmp_path)]) == 1
    repro = sorted(tmp_path.iterdir())
    assert repro and repro[0].read_text().startswith("; Safe site")
    assert "reproducer written" in capsys.readouterr().out


def test_bad_usage_exits_two():
    with pytest.raises(SystemExit) as e:
        main(["analyze"])
    assert e.value.code == 2
