"""Replay the bundled exploit traces with type pools on and off.

    python3 demos/exploit_traces.py
"""

from __future__ import annotations

import io
from importlib import resources

from heapsafe.cli import cmd_run
from heapsafe.config import Config

TRACES = resources.files("heapsafe") / "traces"
VICTIM = str(TRACES / "victim.hir")

for name in ("uaf", "double_free", "ubi", "unsafe_overflow"):
    for pools in (True, False):
        res = cmd_run(VICTIM, str(TRACES / f"{name}.jsonl"), Config(), out=io.StringIO(),
                      pools_enabled=pools)
        kinds = [o["outcome"] for o in res.outcomes if o["outcome"] != "ok"]
        status = "invariants hold" if res.ok else f"{len(res.violations)} violations"
        print(f"{name:16} pools={'on ' if pools else 'off'}  {', '.join(kinds) or '-':48} {status}")
