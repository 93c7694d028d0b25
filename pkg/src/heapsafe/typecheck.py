"""Cast and access validation against a site's allocated-type.

Layouts are compared after flattening, so two types are compatible when
their primitive entries agree offset by offset, whatever their names.  A
site allocated by size gets its type from the first concrete view of the
object (delayed typing); a cast emitted right after the allocation is
treated as the allocation's type, and an object never cast is plain bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .events import Event
from .hir.ir import HirProgram, Var
from .hir.types import AllocatedType, ArrayType, PrimType, TypeExpr, int_range
from .intervals import Interval


def _layout(t) -> tuple:
    if isinstance(t, AllocatedType):
        return tuple(t.layout)
    return tuple(t)


def is_compatible_cast(tn, t) -> bool:
    """True when ``t``'s flattened layout equals or is a prefix of ``tn``'s.

    Both arguments are AllocatedTypes or flattened ``(offset, tag)`` lists.
    """
    big, small = _layout(tn), _layout(t)
    if len(small) > len(big):
        return False
    return big[: len(small)] == small


def validate_int_cast(v: Interval | None, frm, to) -> bool:
    """The value provably survives the conversion unchanged."""
    if v is None:
        return True
    to_tag = to.tag if isinstance(to, PrimType) else to
    lo, hi = int_range(to_tag)
    return v.within(lo, hi)


def _prefix_of(table, small: TypeExpr, big: TypeExpr) -> bool:
    return is_compatible_cast(table.flat(big), table.flat(small))


def resolve_delayed_type(table, size: int, views) -> TypeExpr | None:
    """Concrete type of an object allocated by size, from the views it is cast to.

    The widest view wins and every other view must be a prefix of it.  The
    object then has that type when the sizes agree, or is an array of it
    when the allocation holds a whole number of elements.  Anything else
    cannot be typed.
    """
    views = list(dict.fromkeys(views))
    if not views:
        return None
    best = max(views, key=lambda t: (table.size(t), str(t)))
    if any(not _prefix_of(table, v, best) for v in views):
        return None
    return _sized(table, best, size)


def _sized(table, t: TypeExpr, size: int) -> TypeExpr | None:
    ts = table.size(t)
    if ts == size:
        return t
    if ts > 0 and size % ts == 0:
        return ArrayType(t, size // ts)
    return None


def realloc_type_transition(table, old: TypeExpr, new: TypeExpr | None, new_size: int | None = None):
    """Type after reallocation, or None when the old layout is not kept as a prefix.

    A typed reallocation must keep the old layout as a prefix of the new one
    (a grown last field or appended fields).  A reallocation by size keeps the
    element type of arrays and otherwise needs a whole number of old objects.
    """
    if new is not None:
        return new if _prefix_of(table, old, new) else None
    if new_size is None:
        return None
    if isinstance(old, ArrayType):
        es = table.size(old.elem)
        if new_size % es == 0 and new_size >= es:
            return ArrayType(old.elem, new_size // es) if new_size // es != 1 else old.elem
        return None
    return _sized(table, old, new_size)


def elided_cast_type(p: HirProgram, site_id: str, size: int | None) -> TypeExpr | None:
    """Type of a size allocation immediately cast to a concrete view."""
    site = p.sites[site_id]
    if site.ty is not None or site.loc is None or size is None:
        return None
    fn, label, idx = site.loc
    instrs = p.functions[fn].block(label).instrs
    if idx + 1 >= len(instrs):
        return None
    nxt = instrs[idx + 1]
    if nxt.op != "cast" or nxt.opaque or nxt.args[0] != Var(p.instr(site.loc).dest):
        return None
    if nxt.ty is None or not p.vtypes[fn][nxt.dest].is_ref:
        return None
    return _sized(p.table, nxt.ty, size)


@dataclass
class TypeVerdict:
    reasons: list[str]
    ty: TypeExpr | None  # the site's concrete type, if resolved
    versions: dict = field(default_factory=dict)  # object -> type
    witnesses: dict = field(default_factory=dict)

    @property
    def safe(self) -> bool:
        return not self.reasons and self.ty is not None

    def allocated_type(self, table) -> AllocatedType | None:
        return None if self.ty is None else table.allocated_type(self.ty)


def site_base_type(p: HirProgram, site_id: str, events: list[Event], size: int | None):
    """Type of the original allocation and whether it came from delayed typing.

    ``size`` is the allocation size when it is a known constant.
    """
    site = p.sites[site_id]
    if site.ty is not None:
        return site.ty, False
    t = elided_cast_type(p, site_id, size)
    if t is not None:
        return t, False
    if size is None:
        return None, True
    casts = [ev for ev in events if ev.kind == "cast" and ev.from_view is None
             and ev.to_view is not None and ev.obj.version == ""]
    if not casts:
        # never interpreted: the object is plain bytes
        return raw_bytes(size), True
    views = [ev.to_view for ev in casts if ev.offs == Interval.const(0)]
    return resolve_delayed_type(p.table, size, views), True


def raw_bytes(size: int) -> TypeExpr:
    return PrimType("i8") if size == 1 else ArrayType(PrimType("i8"), size)


def version_types(p: HirProgram, infos: dict, base: TypeExpr | None):
    """Types of every realloc version of a site; None marks an untypeable version."""
    out = {}

    def type_of(obj, stack=()):
        if obj in out:
            return out[obj]
        if obj.version == "":
            out[obj] = base
            return base
        if obj in stack:
            return None
        inf = infos[obj]
        res = None
        first = True
        for prev in sorted(inf.prev):
            pt = type_of(prev, stack + (obj,))
            if pt is None:
                res, first = None, False
                break
            size = int(inf.size.lo) if inf.size is not None and inf.size.is_singleton else None
            t = realloc_type_transition(p.table, pt, inf.ty, size)
            if t is None or (not first and t != res):
                res, first = None, False
                break
            res, first = t, False
        out[obj] = res
        return res

    for obj in sorted(infos):
        type_of(obj)
    return out


def _offsets(offs: Interval | None, limit: int):
    """Offsets of ``offs`` inside ``[0, limit)``, which spatial checks cover otherwise."""
    if offs is None or limit <= 0:
        return []
    m = offs.meet(Interval(0, limit - 1))
    return [] if m is None else list(m.values())


def check_type_event(p: HirProgram, ev: Event, ty: TypeExpr | None) -> list[str]:
    """Type reasons of one event against the object's type."""
    if ev.kind == "intcast":
        return [] if validate_int_cast(ev.value, ev.from_tag, ev.to_tag) else ["int-cast"]
    if ev.kind == "cast":
        if ev.to_view is None:
            return []
        if ev.from_view is not None:
            if _prefix_of(p.table, ev.to_view, ev.from_view):
                return []
            if _prefix_of(p.table, ev.from_view, ev.to_view):
                return ["downcast"]
            return ["incompatible-cast"]
        if ty is None:
            return []
        layout = dict(p.table.flat(ty))
        size = p.table.size(ty)
        if ev.offs is None or not ev.offs.is_finite:
            return ["incompatible-cast"]
        for base in _offsets(ev.offs, size):
            for o, tag in p.table.flat(ev.to_view):
                if base + o >= size:
                    break
                if layout.get(base + o) != tag:
                    return ["incompatible-cast"]
        return []
    if ev.kind == "access":
        if ty is None:
            return []
        layout = dict(p.table.flat(ty))
        size = p.table.size(ty)
        if ev.offs is None:
            return []
        for o in _offsets(ev.offs.shift(ev.path_off), size):
            if layout.get(o) != ev.tag:
                return ["access-type-mismatch"]
        return []
    return []


def validate_type(p: HirProgram, site_id: str, events: list[Event], infos: dict,
                  size: int | None) -> TypeVerdict:
    """Type verdict of a site from all events on all its objects.

    ``infos`` maps the site's abstract objects (all realloc versions) to
    their ObjInfo; ``size`` is the constant allocation size, if any.
    """
    reasons: list[str] = []
    wit: dict = {}
    base, delayed = site_base_type(p, site_id, events, size)
    if base is None:
        reasons.append("delayed-type")
    versions = version_types(p, infos, base)
    for obj, t in sorted(versions.items()):
        if obj.version and t is None and base is not None:
            inf = infos[obj]
            # a variable size is the spatial validator's business
            if inf.ty is not None or (inf.size is not None and inf.size.is_singleton):
                if "realloc-retype" not in reasons:
                    reasons.append("realloc-retype")
    for ev in events:
        for r in check_type_event(p, ev, versions.get(ev.obj, base)):
            if r not in reasons:
                reasons.append(r)
            wit.setdefault(r, []).append(ev)
    return TypeVerdict(reasons, base, versions, wit)
