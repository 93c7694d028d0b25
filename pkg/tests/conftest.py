from __future__ import annotations

import json
from importlib import resources

import pytest

from heapsafe.hir import parse_program

CORPUS = resources.files("heapsafe") / "corpus"
TRACES = resources.files("heapsafe") / "traces"


def corpus_source(name: str) -> str:
    return (CORPUS / f"{name}.hir").read_text()


def corpus_program(name: str):
    return parse_program(corpus_source(name))


def corpus_labels() -> dict:
    return json.loads((CORPUS / "labels.json").read_text())


@pytest.fixture
def parse():
    return parse_program
