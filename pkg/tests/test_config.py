from __future__ import annotations

import json

import pytest

from heapsafe.cli import build_config, make_parser
from heapsafe.config import ENV_VAR, Config, load_config


def test_defaults():
    c = load_config(env={})
    assert (c.depth, c.unroll, c.paths, c.heap_clone, c.symexec) == (4, 2, 4096, False, True)


def test_env_file_overrides_defaults(tmp_path):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"depth": 1, "heap_clone": True}))
    c = load_config(env={ENV_VAR: str(f)})
    assert c.depth == 1 and c.heap_clone


def test_unknown_keys_are_rejected(tmp_path):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"colour": 1}))
    with pytest.raises(ValueError):
        load_config(str(f), env={})


def test_flags_override_the_file(tmp_path, monkeypatch):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"depth": 1, "unroll": 7}))
    monkeypatch.setenv(ENV_VAR, str(f))
    args = make_parser().parse_args(["analyze", "x.hir", "--budget-depth", "3", "--no-symexec"])
    c = build_config(args)
    assert (c.depth, c.unroll, c.symexec) == (3, 7, False)


def test_snapshot_names_the_budgets():
    assert Config().snapshot() == {"budget_depth": 4, "budget_paths": 4096, "budget_unroll": 2,
                                   "heap_clone": False, "symexec": True}
