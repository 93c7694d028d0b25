"""In-memory form of heap IR programs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from .types import AllocatedType, TypeExpr, TypeTable

OPCODES = (
    "alloc", "free", "realloc", "gep", "cast", "load", "store", "assign",
    "arith", "cmp", "br", "jmp", "call", "ret", "spawn", "gaddr", "phi",
)
ARITH_OPS = ("add", "sub", "mul")
CMP_PREDS = ("lt", "le", "gt", "ge", "eq", "ne")
TERMINATORS = ("br", "jmp", "ret")


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Const:
    value: int

    def __str__(self):
        return str(self.value)


@dataclass(frozen=True)
class Null:
    def __str__(self):
        return "null"


@dataclass(frozen=True)
class GlobalRef:
    name: str

    def __str__(self):
        return "@" + self.name


Operand = Union[Var, Const, Null, GlobalRef]


@dataclass
class Instr:
    op: str
    dest: str | None = None
    args: tuple = ()
    # alloc/realloc/cast target type; opaque=True marks an untyped cast target
    ty: TypeExpr | None = None
    opaque: bool = False
    path: tuple = ()
    pred: str | None = None
    labels: tuple[str, ...] = ()
    callee: str | None = None
    incoming: tuple[tuple[str, Operand], ...] = ()
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)
    tokpos: dict = field(default_factory=dict, compare=False, repr=False)

    def uses(self) -> list[str]:
        """SSA names read by this instruction, in operand order."""
        ops = list(self.args) + [v for _, v in self.incoming]
        return [o.name for o in ops if isinstance(o, Var)]


@dataclass
class Block:
    label: str
    instrs: list[Instr] = field(default_factory=list)
    line: int = field(default=0, compare=False)

    @property
    def terminator(self) -> Instr:
        return self.instrs[-1]


@dataclass(frozen=True)
class Param:
    name: str
    ty: TypeExpr
    lo: int | None = None
    hi: int | None = None


@dataclass
class Function:
    name: str
    params: tuple[Param, ...]
    ret: TypeExpr | None
    blocks: list[Block]
    line: int = field(default=0, compare=False)

    def block(self, label: str) -> Block:
        for b in self.blocks:
            if b.label == label:
                return b
        raise KeyError(label)

    @property
    def entry(self) -> Block:
        return self.blocks[0]

    def instructions(self):
        for b in self.blocks:
            for i, ins in enumerate(b.instrs):
                yield b.label, i, ins


@dataclass(frozen=True)
class AllocInit:
    ty: TypeExpr | None = None
    size: int | None = None


@dataclass
class GlobalDecl:
    name: str
    ty: TypeExpr
    # Const, Null, AllocInit or dict[field -> init]; None when uninitialized
    init: object = None
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class VType:
    """Static type of an SSA value: an integer tag or a ref with its view."""

    kind: str  # "int" | "ref"
    tag: str = "i64"
    view: TypeExpr | None = None

    @property
    def is_ref(self) -> bool:
        return self.kind == "ref"


@dataclass(frozen=True)
class AllocationSite:
    site_id: str
    fn: str
    line: int
    ty: TypeExpr | None
    size: Operand | None
    dynamic: bool
    loc: tuple | None = None  # (fn, block, index) for instruction sites


@dataclass
class HirProgram:
    typedefs: dict
    globals: dict[str, GlobalDecl]
    functions: dict[str, Function]
    entry: str = "main"
    table: TypeTable = field(default=None, compare=False, repr=False)
    vtypes: dict[str, dict[str, VType]] = field(default_factory=dict, compare=False, repr=False)
    sites: dict[str, AllocationSite] = field(default_factory=dict, compare=False, repr=False)

    def instr(self, loc) -> Instr:
        fn, label, idx = loc
        return self.functions[fn].block(label).instrs[idx]

    def vtype(self, fn: str, name: str) -> VType:
        return self.vtypes[fn][name]

    def spawn_edges(self) -> list[tuple[str, str]]:
        out = []
        for f in self.functions.values():
            for _, _, ins in f.instructions():
                if ins.op == "spawn":
                    out.append((f.name, ins.callee))
        return out

    def has_spawn(self) -> bool:
        return bool(self.spawn_edges())

    def site_type(self, site_id: str) -> AllocatedType | None:
        s = self.sites[site_id]
        return None if s.ty is None else self.table.allocated_type(s.ty)


def site_id_for(fn: str, dest: str) -> str:
    return f"{fn}:{dest}"
