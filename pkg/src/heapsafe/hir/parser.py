"""Parser for the textual heap IR.

Grammar sketch (one instruction per line, ``;`` starts a comment)::

    type NAME = [union] { field: TYPE, ... }
    global NAME: TYPE [= INIT]
    fn NAME(param: TYPE [in LO..HI], ...) [-> TYPE] {
    label:
        v = alloc TYPE | alloc SIZE
        ...
    }
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .ir import (
    ARITH_OPS, CMP_PREDS, AllocInit, Block, Const, Function, GlobalDecl, GlobalRef,
    HirProgram, Instr, Null, Param, Var,
)
from .types import PRIM_SIZES, ArrayType, NamedType, PrimType, Typedef


@dataclass(frozen=True)
class Diagnostic:
    line: int
    col: int
    kind: str  # syntax | duplicate | unresolved | ssa | type | cfg
    message: str

    def __str__(self) -> str:
        return f"{self.line}:{self.col}: {self.kind}: {self.message}"


class HirError(Exception):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


_TOKEN = re.compile(
    r"""
    (?P<comment>;[^\n]*)
  | (?P<nl>\n)
  | (?P<ws>[ \t\r]+)
  | (?P<arrow>->)
  | (?P<range>\.\.)
  | (?P<int>-?\d+)
  | (?P<gname>@[A-Za-z_][A-Za-z0-9_]*)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[{}()\[\]<>,:=.])
    """,
    re.VERBOSE,
)

KEYWORDS = {"type", "global", "fn", "union", "in", "null", "opaque"}
_OPS = {
    "alloc", "free", "realloc", "gep", "cast", "load", "store", "assign", "cmp",
    "br", "jmp", "call", "ret", "spawn", "gaddr", "phi", *ARITH_OPS,
}


@dataclass
class Tok:
    kind: str
    value: str
    line: int
    col: int


def tokenize(text: str) -> list[Tok]:
    out: list[Tok] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise HirError([Diagnostic(line, col, "syntax", f"unexpected character {text[pos]!r}")])
        kind = m.lastgroup
        if kind == "nl":
            out.append(Tok("nl", "\n", line, col))
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            out.append(Tok(kind, m.group(), line, col))
        pos = m.end()
    out.append(Tok("eof", "", line, pos - line_start + 1))
    return out


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.pos = 0
        self.typenames = {
            self.toks[i + 1].value
            for i in range(len(self.toks) - 1)
            if self.toks[i].value == "type" and self.toks[i + 1].kind == "name"
        }

    # -- token helpers -------------------------------------------------
    @property
    def tok(self) -> Tok:
        return self.toks[self.pos]

    def peek(self, k: int = 1) -> Tok:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def error(self, msg: str, tok: Tok | None = None):
        tok = tok or self.tok
        return HirError([Diagnostic(tok.line, tok.col, "syntax", msg)])

    def advance(self) -> Tok:
        t = self.tok
        self.pos += 1
        return t

    def at(self, value: str) -> bool:
        return self.tok.value == value and self.tok.kind != "int"

    def accept(self, value: str) -> bool:
        if self.at(value):
            self.pos += 1
            return True
        return False

    def expect(self, value: str) -> Tok:
        if not self.at(value):
            got = self.tok.value if self.tok.kind != "nl" else "end of line"
            raise self.error(f"expected {value!r}, got {got!r}")
        return self.advance()

    def name(self) -> Tok:
        if self.tok.kind != "name":
            raise self.error(f"expected a name, got {self.tok.value!r}")
        return self.advance()

    def integer(self) -> int:
        if self.tok.kind != "int":
            raise self.error(f"expected an integer, got {self.tok.value!r}")
        return int(self.advance().value)

    def skip_nl(self):
        while self.tok.kind == "nl":
            self.pos += 1

    def end_of_instr(self):
        if self.tok.kind == "nl":
            self.skip_nl()
        elif not self.at("}"):
            raise self.error(f"expected end of line, got {self.tok.value!r}")

    # -- types -------------------------------------------------------------
    def is_type_start(self) -> bool:
        t = self.tok
        return t.kind == "name" and (t.value in PRIM_SIZES or t.value in self.typenames)

    def parse_type(self):
        t = self.name()
        if t.value == "ref":
            ty = PrimType("ref")
            if self.accept("<"):
                if self.accept("opaque"):
                    pointee = None
                else:
                    pointee = self.parse_type()
                self.expect(">")
                ty = PrimType("ref", pointee)
        elif t.value in PRIM_SIZES:
            ty = PrimType(t.value)
        elif t.value in KEYWORDS:
            raise self.error(f"expected a type, got {t.value!r}", t)
        else:
            ty = NamedType(t.value)
        while self.at("["):
            self.advance()
            n = self.integer()
            if n <= 0:
                raise self.error("array length must be positive")
            self.expect("]")
            ty = ArrayType(ty, n)
        return ty

    # -- top level ---------------------------------------------------------
    def parse(self):
        typedefs: list[tuple[Typedef, Tok]] = []
        globals_: list[tuple[GlobalDecl, Tok]] = []
        functions: list[tuple[Function, Tok]] = []
        self.skip_nl()
        while self.tok.kind != "eof":
            if self.at("type"):
                typedefs.append(self.parse_typedef())
            elif self.at("global"):
                globals_.append(self.parse_global())
            elif self.at("fn"):
                functions.append(self.parse_function())
            else:
                raise self.error(f"expected 'type', 'global' or 'fn', got {self.tok.value!r}")
            self.skip_nl()
        return typedefs, globals_, functions

    def parse_typedef(self):
        start = self.expect("type")
        name = self.name()
        self.expect("=")
        is_union = self.accept("union")
        self.expect("{")
        fields = []
        self.skip_nl()
        while not self.at("}"):
            fname = self.name().value
            self.expect(":")
            fields.append((fname, self.parse_type()))
            self.skip_nl()
            if not self.accept(","):
                self.skip_nl()
                break
            self.skip_nl()
        self.expect("}")
        if not fields:
            raise self.error("empty compound type", start)
        return Typedef(name.value, tuple(fields), is_union, start.line), name

    def parse_ginit(self):
        if self.tok.kind == "int":
            return Const(self.integer())
        if self.accept("null"):
            return Null()
        if self.at("alloc"):
            self.advance()
            if self.tok.kind == "int":
                return AllocInit(size=self.integer())
            return AllocInit(ty=self.parse_type())
        if self.accept("{"):
            out = {}
            self.skip_nl()
            while not self.at("}"):
                fname = self.name().value
                self.expect(":")
                out[fname] = self.parse_ginit()
                self.skip_nl()
                if not self.accept(","):
                    self.skip_nl()
                    break
                self.skip_nl()
            self.expect("}")
            return out
        raise self.error(f"bad global initializer {self.tok.value!r}")

    def parse_global(self):
        start = self.expect("global")
        name = self.name()
        self.expect(":")
        ty = self.parse_type()
        init = None
        if self.accept("="):
            init = self.parse_ginit()
        self.end_of_instr()
        return GlobalDecl(name.value, ty, init, start.line), name

    def parse_function(self):
        start = self.expect("fn")
        name = self.name()
        self.expect("(")
        params = []
        while not self.at(")"):
            pname = self.name().value
            self.expect(":")
            pty = self.parse_type()
            lo = hi = None
            if self.accept("in"):
                lo = self.integer()
                self.expect("..")
                hi = self.integer()
                if lo > hi:
                    raise self.error(f"empty input range {lo}..{hi}")
            params.append(Param(pname, pty, lo, hi))
            if not self.accept(","):
                break
        self.expect(")")
        ret = None
        if self.accept("->"):
            ret = self.parse_type()
        self.skip_nl()
        self.expect("{")
        blocks: list[Block] = []
        while True:
            self.skip_nl()
            if self.at("}"):
                self.advance()
                break
            if self.tok.kind == "eof":
                raise self.error("unterminated function body")
            if self.tok.kind == "name" and self.peek().value == ":" and self.tok.value not in _OPS:
                lab = self.advance()
                self.advance()
                blocks.append(Block(lab.value, [], lab.line))
                continue
            if not blocks:
                raise self.error("instruction outside any block")
            blocks[-1].instrs.append(self.parse_instr())
            self.end_of_instr()
        if not blocks:
            raise self.error("function without blocks", start)
        return Function(name.value, tuple(params), ret, blocks, start.line), name

    # -- instructions --------------------------------------------------------
    def operand(self, ins: Instr):
        t = self.tok
        if t.kind == "int":
            self.advance()
            return Const(int(t.value))
        if t.kind == "gname":
            self.advance()
            ins.tokpos.setdefault(t.value, (t.line, t.col))
            return GlobalRef(t.value[1:])
        if t.kind == "name":
            if t.value == "null":
                self.advance()
                return Null()
            if t.value in KEYWORDS:
                raise self.error(f"unexpected keyword {t.value!r}")
            self.advance()
            ins.tokpos.setdefault(t.value, (t.line, t.col))
            return Var(t.value)
        raise self.error(f"expected an operand, got {t.value!r}")

    def field_path(self) -> tuple:
        path = []
        while True:
            if self.accept("."):
                path.append(self.name().value)
            elif self.at("["):
                self.advance()
                path.append(self.integer())
                self.expect("]")
            else:
                return tuple(path)

    def type_or_operand(self, ins: Instr, allow_opaque: bool = False):
        if allow_opaque and self.accept("opaque"):
            ins.opaque = True
            return None
        if self.is_type_start():
            ins.ty = self.parse_type()
            return None
        return self.operand(ins)

    def parse_instr(self) -> Instr:
        first = self.tok
        dest = None
        if self.tok.kind == "name" and self.peek().value == "=":
            dest = self.advance().value
            self.advance()
        optok = self.name()
        op = optok.value
        ins = Instr(op, dest, line=first.line, col=first.col)
        ins.tokpos = {}
        if op == "alloc":
            size = self.type_or_operand(ins)
            ins.args = () if size is None else (size,)
        elif op == "realloc":
            ptr = self.operand(ins)
            self.expect(",")
            size = self.type_or_operand(ins)
            ins.args = (ptr,) if size is None else (ptr, size)
        elif op == "free":
            ins.args = (self.operand(ins),)
        elif op == "gep":
            ptr = self.operand(ins)
            self.expect(",")
            ins.args = (ptr, self.operand(ins))
        elif op == "cast":
            v = self.operand(ins)
            self.expect(",")
            self.type_or_operand(ins, allow_opaque=True)
            if ins.ty is None and not ins.opaque:
                raise self.error("cast target must be a type or 'opaque'")
            ins.args = (v,)
        elif op == "load":
            ins.args = (self.operand(ins),)
            ins.path = self.field_path()
        elif op == "store":
            ptr = self.operand(ins)
            ins.path = self.field_path()
            self.expect(",")
            ins.args = (ptr, self.operand(ins))
        elif op == "assign":
            ins.args = (self.operand(ins),)
        elif op in ARITH_OPS:
            ins.op, ins.pred = "arith", op
            a = self.operand(ins)
            self.expect(",")
            ins.args = (a, self.operand(ins))
        elif op == "cmp":
            pred = self.name().value
            if pred not in CMP_PREDS:
                raise self.error(f"unknown comparison {pred!r}")
            ins.pred = pred
            a = self.operand(ins)
            self.expect(",")
            ins.args = (a, self.operand(ins))
        elif op == "br":
            c = self.operand(ins)
            self.expect(",")
            t = self.name().value
            self.expect(",")
            f = self.name().value
            ins.args, ins.labels = (c,), (t, f)
        elif op == "jmp":
            ins.labels = (self.name().value,)
        elif op in ("call", "spawn"):
            ins.callee = self.name().value
            self.expect("(")
            args = []
            while not self.at(")"):
                args.append(self.operand(ins))
                if not self.accept(","):
                    break
            self.expect(")")
            ins.args = tuple(args)
        elif op == "ret":
            if self.tok.kind not in ("nl", "eof") and not self.at("}"):
                ins.args = (self.operand(ins),)
        elif op == "gaddr":
            g = self.name()
            ins.tokpos.setdefault("@" + g.value, (g.line, g.col))
            ins.args = (GlobalRef(g.value),)
        elif op == "phi":
            inc = []
            while True:
                self.expect("[")
                lab = self.name().value
                self.expect(":")
                inc.append((lab, self.operand(ins)))
                self.expect("]")
                if not self.accept(","):
                    break
            ins.incoming = tuple(inc)
        else:
            raise self.error(f"unknown opcode {op!r}", optok)
        if ins.op in ("free", "store", "br", "jmp", "ret", "spawn") and dest is not None:
            raise self.error(f"{op} does not produce a value", first)
        if ins.op in ("alloc", "realloc", "gep", "cast", "load", "assign", "arith", "cmp", "gaddr", "phi") and dest is None:
            raise self.error(f"{op} result must be named", first)
        return ins


def parse_program(text: str) -> HirProgram:
    """Parse and validate HIR source; raises HirError with located diagnostics."""
    from .check import validate

    typedefs, globals_, functions = _Parser(text).parse()
    return validate(typedefs, globals_, functions)
