"""
Bundle generation and ranking from a handful of per-student parameters.

A student names the classes (and lectures) they need, the time ranges they
are available, a priority in 1..5 for each weekday and a few break settings.
Every combination of one tutor group per class that respects those settings
is generated and ranked by a daily score::

    day_score = (w / sp * f(sp) + br(lunch)) * prio     (used day)
    day_score = 30                                      (free day)

where ``w`` is the attended time, ``sp`` the span from first start to last
end and ``lunch`` the longest idle gap inside the lunch window. ``f`` and
``br`` are step tables that can be swapped out through
:class:`ElicitationParameters`.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from .model import (
    DAY_END,
    DAY_START,
    GRID,
    WEEKDAYS,
    Instance,
    InstanceError,
    PreferenceProfile,
    bundle_key,
)

FREE_DAY_SCORE = Fraction(30)
MAX_SPAN = 600  # minutes; longer days are not permitted

# (upper bound of the span in minutes, points)
DEFAULT_SPAN_POINTS = ((120, 1), (240, 2), (360, 3), (480, 4), (600, 2))
# (lower bound of the lunch break in minutes, points)
DEFAULT_BREAK_POINTS = ((0, 0), (30, 1), (45, Fraction(3, 2)), (60, 2), (75, 1))


class InfeasibleDay(ValueError):
    pass


@dataclass(frozen=True)
class ElicitationParameters:
    classes: tuple
    lectures: tuple = ()
    ranges: Optional[Mapping[str, tuple]] = None
    priorities: Mapping[str, int] = field(default_factory=dict)
    min_lunch: int = 0
    min_gap: int = 15
    lunch_window: tuple = (660, 870)
    max_bundles: int = 200
    span_points: tuple = DEFAULT_SPAN_POINTS
    break_points: tuple = DEFAULT_BREAK_POINTS

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "lectures", tuple(self.lectures))
        prios = {d: 3 for d in WEEKDAYS}
        prios.update(self.priorities)
        for d, p in prios.items():
            if d not in WEEKDAYS:
                raise InstanceError(f"unknown weekday {d!r} in priorities")
            if not (isinstance(p, int) and 1 <= p <= 5):
                raise InstanceError(f"priority of {d} must be an integer in [1, 5], got {p!r}")
        object.__setattr__(self, "priorities", prios)
        if self.min_gap < 0 or self.min_lunch < 0:
            raise InstanceError("min_gap and min_lunch must be non-negative")
        if self.max_bundles < 1:
            raise InstanceError("max_bundles must be positive")
        if self.ranges is not None:
            clean = {}
            for d, ivs in self.ranges.items():
                if d not in WEEKDAYS:
                    raise InstanceError(f"unknown weekday {d!r} in ranges")
                out = []
                for a, b in ivs:
                    if a % GRID or b % GRID or not DAY_START <= a < b <= DAY_END:
                        raise InstanceError(f"range {d} [{a}, {b}) is not on the half-hour grid")
                    out.append((a, b))
                clean[d] = tuple(sorted(out))
            object.__setattr__(self, "ranges", clean)

    def to_dict(self) -> dict:
        doc = {
            "classes": list(self.classes),
            "lectures": list(self.lectures),
            "priorities": dict(self.priorities),
            "minLunch": self.min_lunch,
            "minGap": self.min_gap,
            "lunchWindow": list(self.lunch_window),
            "maxBundles": self.max_bundles,
        }
        if self.ranges is not None:
            doc["ranges"] = {d: [list(iv) for iv in ivs] for d, ivs in self.ranges.items()}
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ElicitationParameters":
        ranges = doc.get("ranges")
        if ranges is not None:
            ranges = {d: tuple(tuple(iv) for iv in ivs) for d, ivs in ranges.items()}
        return cls(
            classes=tuple(doc["classes"]),
            lectures=tuple(doc.get("lectures", ())),
            ranges=ranges,
            priorities=dict(doc.get("priorities", {})),
            min_lunch=doc.get("minLunch", 0),
            min_gap=doc.get("minGap", 15),
            lunch_window=tuple(doc.get("lunchWindow", (660, 870))),
            max_bundles=doc.get("maxBundles", 200),
        )


@dataclass(frozen=True)
class DaySchedule:
    """One weekday of a bundle: sorted events and the derived quantities (minutes)."""

    events: tuple
    w: int
    sp: int
    lunch: int
    gaps: tuple

    @property
    def empty(self) -> bool:
        return not self.events


def day_schedule(events, lunch_window=(660, 870)) -> DaySchedule:
    events = tuple(sorted(events))
    if not events:
        return DaySchedule((), 0, 0, 0, ())
    w = sum(e - s for s, e in events)
    sp = max(e for _, e in events) - events[0][0]
    gaps = []
    reach = events[0][1]
    for s, e in events[1:]:
        if s > reach:
            gaps.append((reach, s))
        reach = max(reach, e)
    lo, hi = lunch_window
    lunch = max((max(0, min(b, hi) - max(a, lo)) for a, b in gaps), default=0)
    return DaySchedule(events, w, sp, lunch, tuple(gaps))


def span_points(sp: int, table=DEFAULT_SPAN_POINTS):
    for bound, pts in table:
        if sp <= bound:
            return pts
    raise InfeasibleDay(f"span of {sp} minutes exceeds {table[-1][0]}")


def break_points(lunch: int, table=DEFAULT_BREAK_POINTS):
    pts = 0
    for bound, p in table:
        if lunch >= bound:
            pts = p
    return pts


def day_score(sched: DaySchedule, prio: int, span_table=DEFAULT_SPAN_POINTS, break_table=DEFAULT_BREAK_POINTS) -> Fraction:
    """Score of one weekday; free days get a flat 30 regardless of priority."""
    if sched.empty:
        return FREE_DAY_SCORE
    if sched.sp > MAX_SPAN:
        raise InfeasibleDay(f"span of {sched.sp} minutes exceeds {MAX_SPAN}")
    f = span_points(sched.sp, span_table)
    br = break_points(sched.lunch, break_table)
    return (Fraction(sched.w, sched.sp) * f + br) * prio


@dataclass(frozen=True)
class ScoredBundle:
    bundle: frozenset
    score: Fraction
    per_day: Mapping[str, Fraction]


# --------------------------------------------------------------------------
# feasibility


def _lecture_events(instance: Instance, params: ElicitationParameters) -> list:
    wanted = set(params.lectures)
    return [t for lec in instance.lectures if lec.class_id in wanted for t in lec.slots]


def _inside_ranges(slot, ranges) -> bool:
    if ranges is None:
        return True
    return any(a <= slot.start and slot.end <= b for a, b in ranges.get(slot.day, ()))


def _separated(s, t, min_gap) -> bool:
    """Slots on different days, or same-day slots apart by at least ``min_gap``."""
    if s.day != t.day:
        return True
    return s.end + min_gap <= t.start or t.end + min_gap <= s.start


def _free_lunch(events, window) -> int:
    """Longest stretch inside ``window`` not covered by any event."""
    lo, hi = window
    best = 0
    cur = lo
    for s, e in sorted(events):
        if e <= cur:
            continue
        if s >= hi:
            break
        best = max(best, min(s, hi) - cur)
        cur = max(cur, e)
    best = max(best, hi - cur)
    return max(best, 0)


def _day_ok(events, params) -> bool:
    if not events:
        return True
    if max(e for _, e in events) - min(s for s, _ in events) > MAX_SPAN:
        return False
    if params.min_lunch > 0 and _free_lunch(events, params.lunch_window) < params.min_lunch:
        return False
    return True


def _candidate_groups(instance, params, lectures):
    cands = []
    for cls in params.classes:
        ok = []
        for g in instance.groups_of(cls):
            if not all(_inside_ranges(t, params.ranges) for t in g.slots):
                continue
            if not all(_separated(t, lt, params.min_gap) for t in g.slots for lt in lectures):
                continue
            ok.append(g)
        cands.append(ok)
    return cands


def _compatible(g, h, min_gap) -> bool:
    return all(_separated(s, t, min_gap) for s in g.slots for t in h.slots)


def is_feasible(instance: Instance, params: ElicitationParameters, b) -> bool:
    """Direct check of every bundle constraint for a single bundle."""
    b = list(b)
    classes = [instance.group(g).class_id for g in b]
    if sorted(classes) != sorted(params.classes):
        return False
    lectures = _lecture_events(instance, params)
    groups = [instance.group(g) for g in b]
    cands = _candidate_groups(instance, params, lectures)
    allowed = {g.id for c in cands for g in c}
    if any(g.id not in allowed for g in groups):
        return False
    for i in range(len(groups)):
        for j in range(i + 1, len(groups)):
            if not _compatible(groups[i], groups[j], params.min_gap):
                return False
    days = _events_by_day(groups, lectures)
    return all(_day_ok(ev, params) for ev in days.values())


def _events_by_day(groups, lectures) -> dict:
    days: dict = {d: [] for d in WEEKDAYS}
    for g in groups:
        for t in g.slots:
            days[t.day].append((t.start, t.end))
    for t in lectures:
        days[t.day].append((t.start, t.end))
    return days


class _Search:
    """Backtracking enumeration of feasible bundles with cached per-day checks.

    Candidate groups get global indices; incompatibility between groups is
    an integer bitmask, and each (weekday, sorted events) pair is checked and
    scored once.
    """

    def __init__(self, instance: Instance, params: ElicitationParameters):
        if not params.classes:
            raise InstanceError("no classes selected")
        for cls in params.classes:
            if not instance.groups_of(cls):
                raise InstanceError(f"class {cls!r} has no tutor groups")
        self.params = params
        lectures = _lecture_events(instance, params)
        cands = _candidate_groups(instance, params, lectures)
        cands.sort(key=len)
        self.levels = []
        flat = []
        for lvl in cands:
            self.levels.append(list(range(len(flat), len(flat) + len(lvl))))
            flat.extend(lvl)
        self.groups = flat
        self.empty = any(not lvl for lvl in cands)
        self.bad = [0] * len(flat)
        for i, g in enumerate(flat):
            for j in range(i + 1, len(flat)):
                h = flat[j]
                if g.class_id != h.class_id and not _compatible(g, h, params.min_gap):
                    self.bad[i] |= 1 << j
                    self.bad[j] |= 1 << i
        self.day_of = {d: k for k, d in enumerate(WEEKDAYS)}
        self.slots = [
            tuple((self.day_of[t.day], (t.start, t.end)) for t in g.slots) for g in flat
        ]
        base = [[] for _ in WEEKDAYS]
        for t in lectures:
            base[self.day_of[t.day]].append((t.start, t.end))
        self.base = tuple(tuple(sorted(ev)) for ev in base)
        self.ok_cache: dict = {}
        self.score_cache: dict = {}

    def day_ok(self, d, events) -> bool:
        key = (d, events)
        hit = self.ok_cache.get(key)
        if hit is None:
            hit = self.ok_cache[key] = _day_ok(list(events), self.params)
        return hit

    def day_score(self, d, events) -> Fraction:
        key = (d, events)
        hit = self.score_cache.get(key)
        if hit is None:
            p = self.params
            sched = day_schedule(events, p.lunch_window)
            hit = day_score(sched, p.priorities[WEEKDAYS[d]], p.span_points, p.break_points)
            self.score_cache[key] = hit
        return hit

    def walk(self, leaf):
        """Call ``leaf(chosen_indices, days)`` for every feasible bundle."""
        if self.empty or not all(self.day_ok(d, ev) for d, ev in enumerate(self.base)):
            return
        levels, bad, slots = self.levels, self.bad, self.slots
        n = len(levels)
        chosen = []

        def rec(level, days, forbid):
            if level == n:
                leaf(chosen, days)
                return
            for gi in levels[level]:
                if forbid >> gi & 1:
                    continue
                new_days = days
                ok = True
                for d, ev in slots[gi]:
                    if new_days is days:
                        new_days = list(days)
                    merged = tuple(sorted(new_days[d] + (ev,)))
                    if not self.day_ok(d, merged):
                        ok = False
                        break
                    new_days[d] = merged
                if not ok:
                    continue
                chosen.append(gi)
                rec(level + 1, new_days, forbid | bad[gi])
                chosen.pop()

        rec(0, self.base, 0)

    def bundle(self, chosen) -> frozenset:
        return frozenset(self.groups[i].id for i in chosen)


def generate_feasible_bundles(instance: Instance, params: ElicitationParameters) -> list:
    """All bundles with one group per selected class satisfying the student's constraints.

    Backtracking over classes with pairwise compatibility and per-day span /
    lunch pruning. Output is sorted by the canonical bundle key.
    """
    search = _Search(instance, params)
    out = []
    search.walk(lambda chosen, days: out.append(search.bundle(chosen)))
    out.sort(key=bundle_key)
    return out


# --------------------------------------------------------------------------
# scoring and ranking


class _Scorer:
    def __init__(self, instance, params):
        self.instance = instance
        self.params = params
        self.lectures = _lecture_events(instance, params)
        self.cache: dict = {}

    def day(self, d, events):
        key = (d, tuple(sorted(events)))
        hit = self.cache.get(key)
        if hit is None:
            p = self.params
            sched = day_schedule(events, p.lunch_window)
            hit = day_score(sched, p.priorities[d], p.span_points, p.break_points)
            self.cache[key] = hit
        return hit

    def score(self, b) -> ScoredBundle:
        groups = [self.instance.group(g) for g in b]
        days = _events_by_day(groups, self.lectures)
        per_day = {d: self.day(d, days[d]) for d in WEEKDAYS}
        return ScoredBundle(frozenset(b), sum(per_day.values(), Fraction(0)), per_day)


def score_bundle(instance: Instance, params: ElicitationParameters, b) -> ScoredBundle:
    if not is_feasible(instance, params, b):
        raise ValueError(f"bundle {sorted(b)} violates the student's constraints")
    return _Scorer(instance, params).score(b)


def rank_bundles(instance: Instance, params: ElicitationParameters) -> tuple:
    """Feasible bundles best-first, ties broken by sorted id list, capped at ``max_bundles``.

    Bundles are first ordered by a float score; only those within rounding
    distance of the cut-off are rescored exactly, so the result equals a
    full exact sort.
    """
    search = _Search(instance, params)
    fscore: dict = {}
    found = []

    def leaf(chosen, days):
        total = 0.0
        for d, ev in enumerate(days):
            key = (d, ev)
            v = fscore.get(key)
            if v is None:
                v = fscore[key] = float(search.day_score(d, ev))
            total += v
        found.append((total, tuple(chosen), days))

    search.walk(leaf)
    k = params.max_bundles
    if len(found) > k:
        cut = heapq.nlargest(k, (f for f, _, _ in found))[-1] - 1e-6
        found = [rec for rec in found if rec[0] >= cut]
    exact = []
    for _, chosen, days in found:
        sc = sum((search.day_score(d, ev) for d, ev in enumerate(days)), Fraction(0))
        exact.append((sc, search.bundle(chosen)))
    exact.sort(key=lambda sb: (-sb[0], bundle_key(sb[1])))
    return tuple(b for _, b in exact[:k])


def _rank_one(args):
    instance, params = args
    return rank_bundles(instance, params)


def build_profile(instance: Instance, params_by_student: Mapping[str, ElicitationParameters], threads: int = 1) -> PreferenceProfile:
    """Rank bundles for every student; ``threads > 1`` fans out to a process pool."""
    students = list(params_by_student)
    jobs = [(instance, params_by_student[s]) for s in students]
    if threads > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=threads) as pool:
            lists = list(pool.map(_rank_one, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
    else:
        lists = [_rank_one(j) for j in jobs]
    return PreferenceProfile(dict(zip(students, lists)))
