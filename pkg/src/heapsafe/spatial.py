"""Spatial validation: every alias of a site stays inside ``[0, size)``.

A site is spatially safe when its size is a constant, every pointer step
and access through any alias has bounded offsets that stay in bounds, no
step moves by a negative amount, frees and reallocs hit the object start,
and reallocation only grows the object.  Aliases taken before a realloc
point at the old version and are checked against the old size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .events import Event
from .intervals import Interval

# Test-only switch used by the mutation harness: drop the negative-offset
# rule and every lower-bound check.
SKIP_NEGATIVE_CHECK = False

_I64 = Interval.of_tag("i64")


@dataclass
class SpatialState:
    """Per-site bookkeeping: current size, realloc history and alias indexes."""

    size: Interval | None
    history: list[int] = field(default_factory=list)
    index: dict[str, Interval] = field(default_factory=dict)
    unsafe: str | None = None

    @property
    def constant(self) -> bool:
        return self.size is not None and self.size.is_singleton


def _lower_ok(lo) -> bool:
    return SKIP_NEGATIVE_CHECK or lo >= 0


def _unknown(iv: Interval) -> bool:
    # an offset spanning every i64 value carries no information
    return not iv.is_finite or (iv.lo <= _I64.lo and iv.hi >= _I64.hi)


def eval_index_range(index: Interval, offset: Interval | int) -> Interval:
    """Byte range of ``index + offset`` at a use; unbounded inputs stay unbounded."""
    if isinstance(offset, int):
        offset = Interval.const(offset)
    return index + offset


def check_event(ev: Event, size: Interval | None) -> list[str]:
    """Spatial reasons an event violates, for an object of the given size."""
    if size is None:
        return []
    limit = size.lo  # smallest possible size
    if ev.kind == "gep":
        amt = ev.amount
        if amt is None or ev.offs is None:
            return []
        if _unknown(amt):
            return ["non-constant-offset"]
        if not _lower_ok(amt.lo):
            return ["negative-offset"]
        res = ev.offs + amt.scale(ev.scale)
        if ev.result is not None:
            # the result value may be tighter (accumulated increments)
            tight = res.meet(ev.result)
            if tight is None:
                return []
            res = tight
        if _unknown(res):
            return ["non-constant-offset"]
        if not _lower_ok(res.lo) or res.hi >= limit:
            return ["out-of-bounds"]
        return []
    if ev.kind == "access":
        rng = ev.offs.shift(ev.path_off)
        if _unknown(rng):
            return ["non-constant-offset"]
        if not _lower_ok(rng.lo) or rng.hi + ev.size > limit:
            return ["out-of-bounds"]
        return []
    if ev.kind == "free":
        if ev.offs != Interval.const(0):
            return ["invalid-free"]
        return []
    if ev.kind == "realloc":
        out = []
        if ev.offs != Interval.const(0):
            out.append("invalid-free")
        out += realloc_reasons(size, ev.new_size)
        return out
    return []


def realloc_reasons(old: Interval, new: Interval | None) -> list[str]:
    if new is None:
        return []
    if not new.is_singleton:
        return ["realloc-variable"]
    if new.lo < old.hi:
        return ["realloc-shrink"]
    return []


def apply_realloc_rule(state: SpatialState, new_size: Interval | int) -> SpatialState:
    """Grow-only reallocation; shrink or a variable size makes the state unsafe."""
    if isinstance(new_size, int):
        new_size = Interval.const(new_size)
    if state.unsafe:
        return state
    reasons = realloc_reasons(state.size, new_size) if state.size is not None else ["non-constant-size"]
    if reasons:
        return SpatialState(state.size, state.history + [new_size.lo], dict(state.index), reasons[0])
    # pre-realloc aliases keep their own (old) size; only new aliases see the new one
    hist = state.history + [int(state.size.lo)] if state.size is not None else state.history
    return SpatialState(new_size, hist, {}, None)


@dataclass
class SpatialVerdict:
    reasons: list[str]
    witnesses: dict[str, list[Event]]

    @property
    def safe(self) -> bool:
        return not self.reasons


def validate_spatial(size: Interval | None, events: list[Event], sizes: dict | None = None) -> SpatialVerdict:
    """Check every event of a site.  ``sizes`` maps realloc versions to their size."""
    reasons: list[str] = []
    wit: dict[str, list[Event]] = {}
    if size is None or not size.is_singleton or size.lo <= 0:
        reasons.append("non-constant-size")
    for ev in events:
        s = (sizes or {}).get(ev.obj, size)
        if s is None:
            continue
        for r in check_event(ev, s):
            if r not in reasons:
                reasons.append(r)
            wit.setdefault(r, []).append(ev)
    return SpatialVerdict(reasons, wit)
