"""Two threads bump a shared cursor by 3 and 5; sweep the buffer size.

The verdict turns Safe exactly when the buffer has room for the final
write at offset 8.

    python3 demos/shared_cursor.py
"""

from __future__ import annotations

from importlib import resources

from heapsafe.classifier import classify_all
from heapsafe.hir import parse_program
from heapsafe.oracle import run_oracle

SRC = (resources.files("heapsafe") / "corpus" / "shared_accum_overflow.hir").read_text()

for size in range(6, 12):
    p = parse_program(SRC.replace("alloc 8", f"alloc {size}"))
    v = classify_all(p).site("main:buf")
    res = run_oracle(p)
    seen = "clean" if res.clean("main:buf") else "violation"
    print(f"size {size:2}: {v.verdict:6} {','.join(v.reasons) or '-':22} "
          f"oracle {seen} over {res.runs} interleavings")
