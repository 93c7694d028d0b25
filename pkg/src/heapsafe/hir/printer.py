"""Canonical text form of a program; parsing the output gives back an equal program."""

from __future__ import annotations

from .ir import AllocInit, Const, Function, GlobalDecl, HirProgram, Instr, Null
from .types import Typedef, format_type


def format_typedef(td: Typedef) -> str:
    body = ", ".join(f"{n}: {format_type(t)}" for n, t in td.fields)
    return f"type {td.name} = {'union ' if td.is_union else ''}{{ {body} }}"


def _ginit(init) -> str:
    if isinstance(init, (Const, Null)):
        return str(init)
    if isinstance(init, AllocInit):
        return f"alloc {init.size}" if init.ty is None else f"alloc {format_type(init.ty)}"
    return "{ " + ", ".join(f"{k}: {_ginit(v)}" for k, v in init.items()) + " }"


def format_global(g: GlobalDecl) -> str:
    s = f"global {g.name}: {format_type(g.ty)}"
    return s if g.init is None else f"{s} = {_ginit(g.init)}"


def _path(path) -> str:
    return "".join(f"[{s}]" if isinstance(s, int) else f".{s}" for s in path)


def _size_or_type(ins: Instr) -> str:
    if ins.ty is not None:
        return format_type(ins.ty)
    return str(ins.args[-1])


def format_instr(ins: Instr) -> str:
    op, a = ins.op, ins.args
    if op == "alloc":
        rhs = f"alloc {_size_or_type(ins)}"
    elif op == "realloc":
        rhs = f"realloc {a[0]}, {_size_or_type(ins)}"
    elif op == "free":
        rhs = f"free {a[0]}"
    elif op == "gep":
        rhs = f"gep {a[0]}, {a[1]}"
    elif op == "cast":
        rhs = f"cast {a[0]}, {'opaque' if ins.opaque else format_type(ins.ty)}"
    elif op == "load":
        rhs = f"load {a[0]}{_path(ins.path)}"
    elif op == "store":
        rhs = f"store {a[0]}{_path(ins.path)}, {a[1]}"
    elif op == "assign":
        rhs = f"assign {a[0]}"
    elif op == "arith":
        rhs = f"{ins.pred} {a[0]}, {a[1]}"
    elif op == "cmp":
        rhs = f"cmp {ins.pred} {a[0]}, {a[1]}"
    elif op == "br":
        rhs = f"br {a[0]}, {ins.labels[0]}, {ins.labels[1]}"
    elif op == "jmp":
        rhs = f"jmp {ins.labels[0]}"
    elif op in ("call", "spawn"):
        rhs = f"{op} {ins.callee}({', '.join(str(x) for x in a)})"
    elif op == "ret":
        rhs = "ret" if not a else f"ret {a[0]}"
    elif op == "gaddr":
        rhs = f"gaddr {a[0].name}"
    elif op == "phi":
        rhs = "phi " + ", ".join(f"[{lab}: {v}]" for lab, v in ins.incoming)
    else:
        raise ValueError(f"unknown opcode {op!r}")
    return rhs if ins.dest is None else f"{ins.dest} = {rhs}"


def format_function(fn: Function) -> str:
    params = []
    for p in fn.params:
        s = f"{p.name}: {format_type(p.ty)}"
        if p.lo is not None:
            s += f" in {p.lo}..{p.hi}"
        params.append(s)
    head = f"fn {fn.name}({', '.join(params)})"
    if fn.ret is not None:
        head += f" -> {format_type(fn.ret)}"
    lines = [head + " {"]
    for b in fn.blocks:
        lines.append(f"{b.label}:")
        lines.extend("  " + format_instr(i) for i in b.instrs)
    lines.append("}")
    return "\n".join(lines)


def format_program(p: HirProgram) -> str:
    parts = [format_typedef(t) for t in p.typedefs.values()]
    parts += [format_global(g) for g in p.globals.values()]
    out = "\n".join(parts)
    fns = "\n\n".join(format_function(f) for f in p.functions.values())
    return (out + "\n\n" + fns if out else fns) + "\n"
