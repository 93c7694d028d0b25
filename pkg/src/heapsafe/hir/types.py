"""Type expressions, packed layouts and allocated-types.

Layouts are packed: a field starts where the previous one ends, nested
compounds are flattened in declaration order and refs are 8 bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

PRIM_SIZES = {"i8": 1, "i16": 2, "i32": 4, "i64": 8, "ref": 8}
INT_TAGS = ("i8", "i16", "i32", "i64")


class TypeError_(Exception):
    """Raised for malformed or recursive type declarations."""


@dataclass(frozen=True)
class PrimType:
    tag: str
    # view carried by typed refs (ref<T>); never part of the layout
    pointee: TypeExpr | None = None

    def __post_init__(self):
        if self.tag not in PRIM_SIZES:
            raise TypeError_(f"unknown primitive {self.tag!r}")
        if self.pointee is not None and self.tag != "ref":
            raise TypeError_("only ref may carry a pointee")

    @property
    def size(self) -> int:
        return PRIM_SIZES[self.tag]

    @property
    def is_int(self) -> bool:
        return self.tag != "ref"

    def __str__(self) -> str:
        if self.pointee is not None:
            return f"ref<{format_type(self.pointee)}>"
        return self.tag


@dataclass(frozen=True)
class NamedType:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class ArrayType:
    elem: TypeExpr
    count: int

    def __str__(self) -> str:
        return f"{format_type(self.elem)}[{self.count}]"


TypeExpr = Union[PrimType, NamedType, ArrayType]


def format_type(t: TypeExpr | None) -> str:
    return "opaque" if t is None else str(t)


def int_range(tag: str) -> tuple[int, int]:
    """Signed representable range of an integer tag."""
    bits = PRIM_SIZES[tag] * 8
    return -(1 << (bits - 1)), (1 << (bits - 1)) - 1


def wrap_int(value: int, tag: str) -> int:
    bits = PRIM_SIZES[tag] * 8
    value &= (1 << bits) - 1
    if value >= 1 << (bits - 1):
        value -= 1 << bits
    return value


@dataclass(frozen=True)
class Typedef:
    name: str
    fields: tuple[tuple[str, TypeExpr], ...]
    is_union: bool = False
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class FieldDesc:
    name: str
    ftype: TypeExpr
    offset: int
    size: int


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


@dataclass(frozen=True)
class AllocatedType:
    """The (S, T, fields) tuple identifying a pool on the safe heap."""

    total_size: int
    tag: str
    fields: tuple[FieldDesc, ...]
    layout: tuple[tuple[int, str], ...] = field(compare=False, repr=False, default=())

    def __post_init__(self):
        end = 0
        prev = -1
        for f in self.fields:
            if f.offset < 0 or f.offset <= prev:
                raise TypeError_(f"{self.tag}: field offsets must ascend")
            if f.offset < end:
                raise TypeError_(f"{self.tag}: field {f.name} overlaps its predecessor")
            prev = f.offset
            end = f.offset + f.size
        if end > self.total_size:
            raise TypeError_(f"{self.tag}: fields exceed total size")

    @property
    def n(self) -> int:
        return len(self.fields)

    def canonical(self) -> str:
        parts = [str(self.total_size), self.tag]
        parts += [f"{f.name}:{f.offset}:{f.size}:{format_type(f.ftype)}" for f in self.fields]
        return "|".join(parts)

    @cached_property
    def type_hash(self) -> int:
        return fnv1a64(self.canonical().encode())

    def layout_map(self) -> dict[int, str]:
        return dict(self.layout)

    def to_json(self) -> dict:
        return {"hash": f"{self.type_hash:016x}", "size": self.total_size, "tag": self.tag}


class TypeTable:
    """Resolves sizes, flattened layouts and field paths against typedefs."""

    def __init__(self, typedefs: dict[str, Typedef] | None = None):
        self.typedefs = dict(typedefs or {})
        self._layouts: dict[TypeExpr, tuple[tuple[int, str], ...]] = {}

    def _members(self, td: Typedef) -> tuple[tuple[str, TypeExpr], ...]:
        if not td.is_union:
            return td.fields
        # a union is laid out as a structure holding its largest member
        best = None
        for name, ft in td.fields:
            if best is None or self.size(ft) > self.size(best[1]):
                best = (name, ft)
        return (best,) if best else ()

    def lookup(self, name: str) -> Typedef:
        try:
            return self.typedefs[name]
        except KeyError:
            raise TypeError_(f"unresolved type {name!r}") from None

    def flat(self, t: TypeExpr) -> tuple[tuple[int, str], ...]:
        if t in self._layouts:
            return self._layouts[t]
        out = tuple(self._flatten(t, 0, ()))
        self._layouts[t] = out
        return out

    def _flatten(self, t: TypeExpr, base: int, stack: tuple[str, ...]):
        if isinstance(t, PrimType):
            yield (base, t.tag)
        elif isinstance(t, ArrayType):
            es = self._size(t.elem, stack)
            for i in range(t.count):
                yield from self._flatten(t.elem, base + i * es, stack)
        else:
            if t.name in stack:
                raise TypeError_(f"recursive type {t.name!r}")
            td = self.lookup(t.name)
            off = base
            for _, ft in self._members(td):
                yield from self._flatten(ft, off, stack + (t.name,))
                off += self._size(ft, stack + (t.name,))

    def size(self, t: TypeExpr) -> int:
        return self._size(t, ())

    def _size(self, t: TypeExpr, stack: tuple[str, ...]) -> int:
        if isinstance(t, PrimType):
            return t.size
        if isinstance(t, ArrayType):
            return t.count * self._size(t.elem, stack)
        if t.name in stack:
            raise TypeError_(f"recursive type {t.name!r}")
        td = self.lookup(t.name)
        return sum(self._size(ft, stack + (t.name,)) for _, ft in self._members(td))

    def is_compound(self, t: TypeExpr) -> bool:
        return not isinstance(t, PrimType)

    def check(self, name: str) -> None:
        """Validate a typedef: every name resolves and nothing recurses."""
        self.size(NamedType(name))

    def allocated_type(self, t: TypeExpr) -> AllocatedType:
        fields = []
        if isinstance(t, NamedType):
            off = 0
            for fname, ft in self._members(self.lookup(t.name)):
                sz = self.size(ft)
                fields.append(FieldDesc(fname, ft, off, sz))
                off += sz
        else:
            fields.append(FieldDesc("[]" if isinstance(t, ArrayType) else "_", t, 0, self.size(t)))
        return AllocatedType(self.size(t), format_type(t), tuple(fields), self.flat(t))

    def resolve_path(self, t: TypeExpr, path: tuple) -> tuple[int, PrimType]:
        """Offset and primitive type of a field path (names and constant indices)."""
        off = 0
        cur = t
        for step in path:
            if isinstance(step, int):
                if not isinstance(cur, ArrayType):
                    raise TypeError_(f"indexing non-array {format_type(cur)}")
                if not 0 <= step < cur.count:
                    raise TypeError_(f"index {step} outside {format_type(cur)}")
                off += step * self.size(cur.elem)
                cur = cur.elem
                continue
            if not isinstance(cur, NamedType):
                raise TypeError_(f"no field {step!r} in {format_type(cur)}")
            td = self.lookup(cur.name)
            members = self._members(td)
            sub = 0
            for fname, ft in members:
                if fname == step:
                    cur = ft
                    break
                sub += self.size(ft)
            else:
                if td.is_union and any(fname == step for fname, _ in td.fields):
                    raise TypeError_(f"union member {step!r} of {td.name} needs a cast")
                raise TypeError_(f"no field {step!r} in {td.name}")
            off += sub
        if not isinstance(cur, PrimType):
            raise TypeError_(f"access to compound {format_type(cur)} needs a field")
        return off, cur


def flatten_layout(t, table: TypeTable | None = None) -> list[tuple[int, PrimType]]:
    """Ordered (offset, primitive) pairs of a type expression or AllocatedType."""
    if isinstance(t, AllocatedType):
        return [(o, PrimType(tag)) for o, tag in t.layout]
    if isinstance(t, Typedef):
        table = table or TypeTable({t.name: t})
        t = NamedType(t.name)
    if table is None:
        table = TypeTable()
    return [(o, PrimType(tag)) for o, tag in table.flat(t)]
