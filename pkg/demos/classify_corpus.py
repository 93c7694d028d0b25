"""Classify every bundled corpus program and compare against the oracle.

    python3 demos/classify_corpus.py
"""

from __future__ import annotations

from importlib import resources

from heapsafe.classifier import classify_all
from heapsafe.hir import parse_program
from heapsafe.oracle import run_oracle


def main() -> None:
    corpus = resources.files("heapsafe") / "corpus"
    totals = {"Safe": 0, "Unsafe": 0, "symexec": 0}
    for f in sorted(corpus.iterdir()):
        if not f.name.endswith(".hir"):
            continue
        src = f.read_text()
        p = parse_program(src)
        report = classify_all(p, source=src)
        oracle = run_oracle(p)
        for s in report.sites:
            seen = "clean" if oracle.clean(s.id) else "violation"
            why = ",".join(s.reasons) or "-"
            print(f"{f.name:28} {s.id:12} {s.verdict:7} {s.stage:8} {why:36} oracle: {seen}")
            totals[s.verdict] += 1
            totals["symexec"] += s.stage == "symexec"
    n = totals["Safe"] + totals["Unsafe"]
    print(f"\n{n} sites: {totals['Safe']} Safe ({totals['symexec']} after symbolic pruning), "
          f"{totals['Unsafe']} Unsafe")


if __name__ == "__main__":
    main()
