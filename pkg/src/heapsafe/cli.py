"""Command-line entry points.

    heapsafe analyze PROG.hir [--json OUT]
    heapsafe run PROG.hir TRACE.jsonl [--json OUT]
    heapsafe oracle PROG.hir [--cap N] [--json OUT]
    heapsafe fuzz [--seed N] [--count N] [--out DIR]

Exit codes: 0 success, 1 a check failed (unsound fuzz case, heap invariant
violation), 2 unusable input (missing file, parse or trace diagnostics).
"""

from __future__ import annotations

import argparse
import json
import sys

from .allocator import HeapState, TraceError, parse_trace, replay_trace
from .classifier import Report, classify_all
from .config import ENV_VAR, Config, load_config
from .hir import Const, HirError, HirProgram, NamedType, parse_program
from .oracle import run_oracle

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2

# flag name -> Config field
_FLAGS = {"budget_depth": "depth", "budget_unroll": "unroll", "budget_paths": "paths",
          "heap_clone": "heap_clone", "seed": "seed", "count": "count", "cap": "cap",
          "json": "json", "workers": "workers", "no_symexec": "symexec"}


class InputError(Exception):
    pass


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as e:
        raise InputError(f"{path}: {e.strerror or e}") from None


def _load_program(path: str) -> tuple[HirProgram, str]:
    src = _read(path)
    try:
        return parse_program(src), src
    except HirError as e:
        raise InputError("\n".join(f"{path}:{d}" for d in e.diagnostics)) from None


def _write_json(path: str | None, text: str) -> None:
    if not path:
        return
    if path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def build_config(args) -> Config:
    cfg = load_config(getattr(args, "config", None))
    over = {}
    for flag, name in _FLAGS.items():
        v = getattr(args, flag, None)
        if v is None or v is False:
            continue
        over[name] = (not v) if flag == "no_symexec" else v
    return cfg.update(over)


# -- commands ------------------------------------------------------------------------------


def cmd_analyze(path: str, cfg: Config, out=None) -> Report:
    out = out or sys.stdout
    p, src = _load_program(path)
    report = classify_all(p, cfg, src)
    for s in report.sites:
        why = f" ({', '.join(s.reasons)})" if s.reasons else ""
        stage = " [symexec]" if s.stage == "symexec" else ""
        print(f"{s.id}  line {s.line}: {s.verdict}{why}{stage}", file=out)
    print(report.summary_line(), file=out)
    _write_json(cfg.json, report.dumps())
    return report


def type_registry(p: HirProgram, report: Report) -> dict:
    """Allocated types a trace may name: every typedef and every site type."""
    out = {}
    for name in sorted(p.table.typedefs):
        t = p.table.allocated_type(NamedType(name))
        out[t.type_hash] = t
    for s in report.sites:
        if s.allocated_type is not None:
            out[s.allocated_type.type_hash] = s.allocated_type
    return out


def placement_for(p: HirProgram, report: Report):
    verdicts = {s.id: s for s in report.sites}

    def place(site_id, ev):
        s = verdicts.get(site_id)
        if s is None:
            return None
        if s.safe:
            return ("safe", s.allocated_type)
        site = p.sites[site_id]
        if site.ty is not None:
            return ("unsafe", p.table.size(site.ty))
        if isinstance(site.size, Const):
            return ("unsafe", site.size.value)
        if ev.size is None:
            raise TraceError(f"line {ev.line}: site {site_id} has a dynamic size; give 'size'")
        return ("unsafe", ev.size)

    return place


def cmd_run(path: str, trace_path: str, cfg: Config, out=None, pools_enabled: bool = True):
    out = out or sys.stdout
    p, src = _load_program(path)
    text = _read(trace_path)
    events = parse_trace(text)
    report = classify_all(p, cfg, src)
    res = replay_trace(HeapState(pools_enabled), events, type_registry(p, report),
                       placement_for(p, report))
    counts: dict[str, int] = {}
    for o in res.outcomes:
        counts[o["outcome"]] = counts.get(o["outcome"], 0) + 1
    summary = ", ".join(f"{k}={counts[k]}" for k in sorted(counts)) or "no events"
    print(f"{len(events)} events: {summary}", file=out)
    for v in res.violations:
        print(f"violation: {v}", file=out)
    for e in res.errors:
        print(f"error: {e}", file=out)
    print("invariants hold" if res.ok else f"{len(res.violations)} invariant violations", file=out)
    _write_json(cfg.json, res.dumps())
    return res


def cmd_oracle(path: str, cfg: Config, out=None):
    out = out or sys.stdout
    p, _ = _load_program(path)
    res = run_oracle(p, cap=cfg.cap)
    for f in sorted(res.findings, key=lambda f: f.key):
        wit = ", ".join(f"{k}={v}" for k, v in f.inputs)
        print(f"{f.kind} site={f.site or '-'} at {f.loc} inputs [{wit}]: {f.detail}", file=out)
    note = " (partial: cap reached, absence of findings is not claimed)" if res.partial else ""
    print(f"{len(res.findings)} findings over {res.inputs} inputs, {res.runs} executions{note}", file=out)
    _write_json(cfg.json, json.dumps(res.to_json(), indent=2, sort_keys=True) + "\n")
    return res


def cmd_fuzz(cfg: Config, out_dir: str = ".", out=None):
    out = out or sys.stdout
    from .fuzz import run_fuzz

    res = run_fuzz(cfg.seed, cfg.count, cfg, out_dir)
    print(res.summary(), file=out)
    for c in res.unsound:
        for site, detail in c.unsound:
            print(f"case {c.index}: Safe site {site}: {detail}", file=out)
    for path in res.reproducers:
        print(f"reproducer written to {path}", file=out)
    _write_json(cfg.json, json.dumps({
        "seed": res.seed, "count": res.count, "unsound": len(res.unsound),
        "unsafe_but_clean_rate": round(res.precision, 6), "reproducers": res.reproducers,
    }, indent=2, sort_keys=True) + "\n")
    return res


# -- argument parsing -------------------------------------------------------------------------


def _common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--json", metavar="PATH", help="write the JSON report here ('-' for stdout)")
    sp.add_argument("--config", metavar="PATH", help=f"config file (default: ${ENV_VAR})")
    sp.add_argument("--budget-depth", type=int, metavar="N", help="symbolic call depth")
    sp.add_argument("--budget-unroll", type=int, metavar="N", help="loop iterations per path")
    sp.add_argument("--budget-paths", type=int, metavar="N", help="paths per exploration")
    sp.add_argument("--heap-clone", action="store_true", default=None,
                    help="name heap objects by calling context")
    sp.add_argument("--no-symexec", action="store_true", default=None,
                    help="static verdicts only")
    sp.add_argument("--seed", type=int, metavar="N")
    sp.add_argument("--count", type=int, metavar="N")
    sp.add_argument("--cap", type=int, metavar="N", help="oracle execution cap")
    sp.add_argument("--workers", type=int, metavar="N", help="fuzz worker processes (0: one per CPU)")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heapsafe", description="Heap allocation-site safety toolkit.")
    sub = ap.add_subparsers(dest="command", required=True)
    a = sub.add_parser("analyze", help="classify allocation sites")
    a.add_argument("program")
    r = sub.add_parser("run", help="replay an allocation trace on the simulated heap")
    r.add_argument("program")
    r.add_argument("trace")
    r.add_argument("--no-pools", action="store_true",
                   help="pool by size only (control experiment; loses type preservation)")
    o = sub.add_parser("oracle", help="exhaustively interpret a program")
    o.add_argument("program")
    f = sub.add_parser("fuzz", help="check classifier soundness on random programs")
    f.add_argument("--out", default=".", metavar="DIR", help="directory for reproducers")
    for sp in (a, r, o, f):
        _common(sp)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = build_config(args)
        if args.command == "analyze":
            cmd_analyze(args.program, cfg)
            return EXIT_OK
        if args.command == "run":
            res = cmd_run(args.program, args.trace, cfg, pools_enabled=not args.no_pools)
            return EXIT_OK if res.ok else EXIT_FAIL
        if args.command == "oracle":
            cmd_oracle(args.program, cfg)
            return EXIT_OK
        res = cmd_fuzz(cfg, args.out)
        return EXIT_OK if res.ok else EXIT_FAIL
    except (InputError, TraceError, ValueError, OSError) as e:
        print(f"heapsafe: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
