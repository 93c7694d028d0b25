"""Per-site classification: global aliases, spatial, shared and type checks,
then optional symbolic pruning of the unsafe sites."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .alias import StaticAnalysis, validate_global_aliases, compute_points_to
from .config import Config
from .events import Event, collect_static_events, events_by_site
from .hir.ir import Const, HirProgram
from .hir.printer import format_program
from .hir.types import AllocatedType, TypeExpr
from .intervals import Interval
from .shared import ThreadsSet, find_shared_objects, thread_count, validate_shared
from .spatial import validate_spatial
from .typecheck import validate_type

# reasons symbolic execution may disprove; the rest are structural
STRUCTURAL = frozenset({"non-constant-size", "global-alias", "shared-unknown-threads"})


@dataclass
class SiteVerdict:
    id: str
    fn: str
    line: int
    verdict: str  # Safe | Unsafe
    reasons: list[str] = field(default_factory=list)
    stage: str = "static"  # static | symexec
    allocated_type: AllocatedType | None = None

    @property
    def safe(self) -> bool:
        return self.verdict == "Safe"

    def to_json(self) -> dict:
        return {
            "id": self.id, "fn": self.fn, "line": self.line, "verdict": self.verdict,
            "reasons": list(self.reasons), "stage": self.stage,
            "allocated_type": None if self.allocated_type is None else self.allocated_type.to_json(),
        }


@dataclass
class Report:
    program_sha256: str
    config: dict
    sites: list[SiteVerdict]

    def site(self, site_id: str) -> SiteVerdict:
        for s in self.sites:
            if s.id == site_id:
                return s
        raise KeyError(site_id)

    @property
    def summary(self) -> dict:
        safe = sum(s.safe for s in self.sites)
        return {"safe": safe, "unsafe": len(self.sites) - safe,
                "symexec_flips": sum(s.stage == "symexec" for s in self.sites)}

    def to_json(self) -> dict:
        return {"program_sha256": self.program_sha256, "config": dict(self.config),
                "sites": [s.to_json() for s in sorted(self.sites, key=lambda s: s.id)],
                "summary": self.summary}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    def summary_line(self) -> str:
        s = self.summary
        return f"{len(self.sites)} sites: {s['safe']} safe, {s['unsafe']} unsafe, {s['symexec_flips']} symexec flips"


@dataclass
class SiteFacts:
    """Static facts about one site, kept for symbolic refinement."""

    size: int | None
    ty: TypeExpr | None
    versions: dict
    shared: bool
    threads: ThreadsSet | None
    events: list[Event]


@dataclass
class StaticResult:
    analysis: StaticAnalysis
    facts: dict[str, SiteFacts]
    verdicts: dict[str, SiteVerdict]


def _site_size(p: HirProgram, a: StaticAnalysis, site_id: str) -> Interval | None:
    objs = [o for o in a.site_objects(site_id) if o.version == ""]
    size = None
    for o in objs:
        s = a.objs[o].size
        if s is not None:
            size = s if size is None else size.join(s)
    if size is None and not objs:
        site = p.sites[site_id]
        if site.ty is not None:
            return Interval.const(p.table.size(site.ty))
        if isinstance(site.size, Const):
            return Interval.const(site.size.value)
    return size


def analyze_static(p: HirProgram, heap_clone: bool = False) -> StaticResult:
    a = StaticAnalysis(p, heap_clone)
    pmap = compute_points_to(p, heap_clone, a)
    galias = validate_global_aliases(p, pmap)
    by_site = events_by_site(collect_static_events(a))
    shared = find_shared_objects(a)
    facts: dict[str, SiteFacts] = {}
    verdicts: dict[str, SiteVerdict] = {}
    for sid in sorted(p.sites):
        site = p.sites[sid]
        evs = by_site.get(sid, [])
        size = _site_size(p, a, sid)
        sizes = {o: a.objs[o].size for o in a.site_objects(sid)}
        reasons = sorted(galias.get(sid, ()))
        sp = validate_spatial(size, evs, sizes).reasons
        tset = None
        if sid in shared:
            tset = thread_count(a, sid, evs)
            sp = validate_shared(sp, tset)
        reasons += [r for r in sp if r not in reasons]
        csize = int(size.lo) if size is not None and size.is_singleton and size.lo > 0 else None
        infos = {o: a.objs[o] for o in a.site_objects(sid)}
        tv = validate_type(p, sid, evs, infos, csize)
        reasons += [r for r in tv.reasons if r not in reasons]
        facts[sid] = SiteFacts(csize, tv.ty, tv.versions, sid in shared, tset, evs)
        at = p.table.allocated_type(tv.ty) if tv.ty is not None else None
        if reasons:
            verdicts[sid] = SiteVerdict(sid, site.fn, site.line, "Unsafe", reasons)
        else:
            verdicts[sid] = SiteVerdict(sid, site.fn, site.line, "Safe", [], "static", at)
    return StaticResult(a, facts, verdicts)


def program_digest(p: HirProgram, source: str | None = None) -> str:
    text = source if source is not None else format_program(p)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def classify_all(p: HirProgram, config: Config | None = None, source: str | None = None) -> Report:
    """Classify every allocation site of ``p``."""
    config = config or Config()
    st = analyze_static(p, config.heap_clone)
    verdicts = dict(st.verdicts)
    if config.symexec:
        from .symexec import ExplorationBudget, prune_false_positives

        budget = ExplorationBudget(config.depth, config.unroll, config.paths)
        verdicts = prune_false_positives(p, st, budget)
    return Report(program_digest(p, source), config.snapshot(),
                  [verdicts[s] for s in sorted(verdicts)])
