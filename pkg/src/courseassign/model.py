"""
Domain types for course-assignment markets and their JSON serialization.

A bundle is a ``frozenset`` of tutor-group ids. Probabilities are stored as
:class:`fractions.Fraction` in exact mode and ``float`` in float mode.
Serialized fractions use the ``"num/den"`` string form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping, Optional, Union

WEEKDAYS = ("Mon", "Tue", "Wed", "Thu", "Fri")
DAY_START = 480  # 08:00
DAY_END = 1230  # 20:30
GRID = 30

Bundle = frozenset
Prob = Union[Fraction, float]


class InstanceError(ValueError):
    """Raised when an instance or profile document violates the schema or an invariant."""


def bundle(*group_ids: str) -> frozenset:
    return frozenset(group_ids)


def bundle_key(b: Iterable[str]) -> tuple:
    """Canonical sort key for a bundle (its sorted id list)."""
    return tuple(sorted(b))


@dataclass(frozen=True, order=True)
class TimeSlot:
    day: str
    start: int
    end: int

    def __post_init__(self):
        if self.day not in WEEKDAYS:
            raise InstanceError(f"unknown weekday {self.day!r}")
        if not (isinstance(self.start, int) and isinstance(self.end, int)):
            raise InstanceError(f"slot times must be integers, got {self.start!r}-{self.end!r}")
        if self.start % GRID or self.end % GRID:
            raise InstanceError(f"slot {self} is not aligned to the {GRID}-minute grid")
        if not DAY_START <= self.start < self.end <= DAY_END:
            raise InstanceError(f"slot {self} outside [{DAY_START}, {DAY_END}] or empty")

    @property
    def duration(self) -> int:
        return self.end - self.start

    def overlaps(self, other: "TimeSlot") -> bool:
        return self.day == other.day and self.start < other.end and other.start < self.end


@dataclass(frozen=True)
class TutorGroup:
    id: str
    class_id: str
    slots: tuple
    capacity: int

    def __post_init__(self):
        if not self.slots:
            raise InstanceError(f"group {self.id!r} has no time slots")
        if not isinstance(self.capacity, int) or self.capacity < 1:
            raise InstanceError(f"group {self.id!r} has capacity {self.capacity!r} < 1")
        for a in range(len(self.slots)):
            for b in range(a + 1, len(self.slots)):
                if self.slots[a].overlaps(self.slots[b]):
                    raise InstanceError(f"group {self.id!r} has overlapping slots")


@dataclass(frozen=True)
class Lecture:
    class_id: str
    slots: tuple = ()


@dataclass(frozen=True)
class Instance:
    classes: tuple
    groups: tuple
    lectures: tuple = ()
    students: tuple = ()

    def __post_init__(self):
        if len(set(self.classes)) != len(self.classes):
            raise InstanceError("duplicate class ids")
        if len(set(self.students)) != len(self.students):
            dup = _first_duplicate(self.students)
            raise InstanceError(f"duplicate student id {dup!r}")
        seen = set()
        known = set(self.classes)
        for g in self.groups:
            if g.id in seen:
                raise InstanceError(f"duplicate group id {g.id!r}")
            seen.add(g.id)
            if g.class_id not in known:
                raise InstanceError(f"group {g.id!r} references unknown class {g.class_id!r}")
        for lec in self.lectures:
            if lec.class_id not in known:
                raise InstanceError(f"lecture references unknown class {lec.class_id!r}")
        object.__setattr__(self, "_group_index", {g.id: g for g in self.groups})

    @property
    def num_classes(self) -> int:
        """Number of classes (the bundle-size bound, written ell elsewhere)."""
        return len(self.classes)

    def group(self, group_id: str) -> TutorGroup:
        return self._group_index[group_id]

    def has_group(self, group_id: str) -> bool:
        return group_id in self._group_index

    @property
    def capacities(self) -> dict:
        return {g.id: g.capacity for g in self.groups}

    def groups_of(self, class_id: str) -> list:
        return [g for g in self.groups if g.class_id == class_id]


def _first_duplicate(items):
    seen = set()
    for x in items:
        if x in seen:
            return x
        seen.add(x)
    return None


@dataclass(frozen=True)
class BundleVerdict:
    valid: bool
    reason: str = ""

    def __bool__(self):
        return self.valid


def validate_bundle(instance: Instance, b: Iterable[str]) -> BundleVerdict:
    """Check that ``b`` holds known groups, at most one per class, and at most ell of them."""
    b = list(b)
    if not b:
        return BundleVerdict(False, "empty bundle")
    if len(set(b)) != len(b):
        return BundleVerdict(False, "duplicate group ids")
    per_class: dict = {}
    for gid in b:
        if not instance.has_group(gid):
            return BundleVerdict(False, f"unknown group {gid!r}")
        cls = instance.group(gid).class_id
        if cls in per_class:
            return BundleVerdict(False, f"two groups of class {cls}: {per_class[cls]}, {gid}")
        per_class[cls] = gid
    if len(b) > instance.num_classes:
        return BundleVerdict(False, f"size {len(b)} exceeds {instance.num_classes} classes")
    return BundleVerdict(True)


@dataclass(frozen=True)
class PreferenceProfile:
    """Strict, possibly truncated, best-first bundle lists per student.

    Unlisted bundles are unacceptable; being unmatched ranks just below the
    last listed bundle.
    """

    rankings: Mapping[str, tuple] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for s, lst in self.rankings.items():
            lst = tuple(frozenset(b) for b in lst)
            if len(set(lst)) != len(lst):
                raise InstanceError(f"student {s!r} lists a bundle twice")
            clean[s] = lst
        object.__setattr__(self, "rankings", clean)
        object.__setattr__(
            self, "_ranks", {s: {b: r for r, b in enumerate(lst, 1)} for s, lst in clean.items()}
        )

    def __getitem__(self, student: str) -> tuple:
        return self.rankings.get(student, ())

    def __len__(self):
        return len(self.rankings)

    @property
    def students(self) -> list:
        return list(self.rankings)

    def rank(self, student: str, b) -> Optional[int]:
        """1-based rank of ``b`` for ``student``; ``None`` when unlisted."""
        return self._ranks.get(student, {}).get(frozenset(b))

    def rank_map(self, student: str) -> dict:
        return self._ranks.get(student, {})

    def validate(self, instance: Instance) -> None:
        known = set(instance.students)
        for s, lst in self.rankings.items():
            if known and s not in known:
                raise InstanceError(f"profile references unknown student {s!r}")
            for b in lst:
                verdict = validate_bundle(instance, b)
                if not verdict:
                    raise InstanceError(f"student {s!r}: invalid bundle {sorted(b)}: {verdict.reason}")

    def distinct_bundles(self) -> set:
        return {b for lst in self.rankings.values() for b in lst}


@dataclass(frozen=True)
class FractionalAssignment:
    """Sparse student x bundle probability matrix.

    ``entries[student][bundle]`` is the probability; students with no entry
    are unmatched with certainty. Missing mass of a student is the probability
    of staying unmatched.
    """

    entries: Mapping[str, Mapping[frozenset, Prob]]
    students: tuple = ()
    arithmetic: str = field(default="exact", compare=False)
    mechanism: str = field(default="", compare=False)

    def __post_init__(self):
        clean = {}
        for s, row in self.entries.items():
            r = {frozenset(b): p for b, p in row.items() if p != 0}
            clean[s] = r
        students = tuple(self.students) or tuple(clean)
        for s in students:
            clean.setdefault(s, {})
        object.__setattr__(self, "entries", clean)
        object.__setattr__(self, "students", students)

    def row(self, student: str) -> dict:
        return self.entries.get(student, {})

    def mass(self, student: str) -> Prob:
        return sum(self.row(student).values(), self._zero())

    def _zero(self):
        return Fraction(0) if self.arithmetic == "exact" else 0.0

    def usage(self) -> dict:
        """Expected number of seats used per group."""
        out: dict = {}
        for row in self.entries.values():
            for b, p in row.items():
                for g in b:
                    out[g] = out.get(g, self._zero()) + p
        return out

    def support(self) -> list:
        """Nonzero (student, bundle) pairs in a deterministic order."""
        return [
            (s, b)
            for s in self.students
            for b in sorted(self.row(s), key=bundle_key)
        ]

    def check(self, instance: Instance, tol: float = 0.0) -> list:
        """Return a list of violated demand/supply invariants (empty when feasible)."""
        problems = []
        for s in self.students:
            for b, p in self.row(s).items():
                if p < 0 or p > 1:
                    problems.append(f"p[{s},{sorted(b)}]={p} outside [0,1]")
            m = self.mass(s)
            if m > 1 + tol:
                problems.append(f"demand of {s} is {m} > 1")
        caps = instance.capacities
        for g, used in self.usage().items():
            if used > caps[g] + tol:
                problems.append(f"supply of {g} is {used} > {caps[g]}")
        return problems


@dataclass(frozen=True)
class DeterministicMatching:
    assignment: Mapping[str, Optional[frozenset]]

    def __post_init__(self):
        object.__setattr__(
            self,
            "assignment",
            {s: (frozenset(b) if b is not None else None) for s, b in self.assignment.items()},
        )

    def __getitem__(self, student):
        return self.assignment.get(student)

    @property
    def size(self) -> int:
        return sum(1 for b in self.assignment.values() if b)

    def usage(self) -> dict:
        out: dict = {}
        for b in self.assignment.values():
            for g in b or ():
                out[g] = out.get(g, 0) + 1
        return out

    def violations(self, instance: Instance) -> dict:
        """Seats allocated above capacity, per over-allocated group."""
        caps = instance.capacities
        return {g: n - caps[g] for g, n in self.usage().items() if n > caps[g]}

    def as_assignment(self, students=None, arithmetic="exact") -> FractionalAssignment:
        one = Fraction(1) if arithmetic == "exact" else 1.0
        students = tuple(students) if students is not None else tuple(self.assignment)
        return FractionalAssignment(
            {s: ({self.assignment[s]: one} if self.assignment.get(s) else {}) for s in students},
            students,
            arithmetic,
            "deterministic",
        )


@dataclass(frozen=True)
class Lottery:
    support: tuple
    epsilon: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "support", tuple((m, lam) for m, lam in self.support))
        for _, lam in self.support:
            if lam < 0:
                raise ValueError(f"negative lottery weight {lam}")

    @property
    def weights(self) -> list:
        return [lam for _, lam in self.support]

    @property
    def matchings(self) -> list:
        return [m for m, _ in self.support]

    def expected_assignment(self, students=None) -> FractionalAssignment:
        exact = all(isinstance(lam, Fraction) for lam in self.weights)
        entries: dict = {}
        for m, lam in self.support:
            for s, b in m.assignment.items():
                row = entries.setdefault(s, {})
                if b:
                    row[b] = row.get(b, 0) + lam
        students = tuple(students) if students is not None else tuple(entries)
        return FractionalAssignment(entries, students, "exact" if exact else "float", "lottery")


# --------------------------------------------------------------------------
# serialization


def _prob_out(p):
    if isinstance(p, Fraction):
        return str(p)
    return float(p)


def _prob_in(v):
    if isinstance(v, str):
        return Fraction(v)
    if isinstance(v, bool):
        raise InstanceError(f"invalid probability {v!r}")
    if isinstance(v, int):
        return Fraction(v)
    return float(v)


def _slot_out(t: TimeSlot) -> dict:
    return {"day": t.day, "start": t.start, "end": t.end}


def _slot_in(d) -> TimeSlot:
    try:
        return TimeSlot(d["day"], d["start"], d["end"])
    except (KeyError, TypeError) as exc:
        raise InstanceError(f"malformed slot {d!r}") from exc


def instance_to_dict(inst: Instance) -> dict:
    return {
        "classes": list(inst.classes),
        "groups": [
            {
                "id": g.id,
                "class": g.class_id,
                "capacity": g.capacity,
                "slots": [_slot_out(t) for t in g.slots],
            }
            for g in inst.groups
        ],
        "lectures": [{"class": lec.class_id, "slots": [_slot_out(t) for t in lec.slots]} for lec in inst.lectures],
        "students": list(inst.students),
    }


def instance_from_dict(doc: Mapping[str, Any]) -> Instance:
    if not isinstance(doc, Mapping):
        raise InstanceError("instance document must be an object")
    for key in ("classes", "groups", "students"):
        if key not in doc:
            raise InstanceError(f"instance document missing {key!r}")
    groups = []
    for g in doc["groups"]:
        try:
            gid = g["id"]
            groups.append(
                TutorGroup(gid, g["class"], tuple(_slot_in(t) for t in g["slots"]), g["capacity"])
            )
        except KeyError as exc:
            raise InstanceError(f"group {g.get('id', '?')!r} missing field {exc}") from exc
        except InstanceError as exc:
            raise InstanceError(f"group {g.get('id', '?')!r}: {exc}") from exc
    lectures = [
        Lecture(lec["class"], tuple(_slot_in(t) for t in lec.get("slots", ())))
        for lec in doc.get("lectures", ())
    ]
    return Instance(
        tuple(doc["classes"]),
        tuple(groups),
        tuple(lectures),
        tuple(doc["students"]),
    )


def load_instance(text: str) -> Instance:
    """Parse and validate an instance JSON document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"not valid JSON: {exc}") from exc
    return instance_from_dict(doc)


def profile_to_dict(p: PreferenceProfile) -> dict:
    return {s: [list(bundle_key(b)) for b in lst] for s, lst in p.rankings.items()}


def profile_from_dict(doc) -> PreferenceProfile:
    if not isinstance(doc, Mapping):
        raise InstanceError("profile document must be an object")
    return PreferenceProfile({s: tuple(frozenset(b) for b in lst) for s, lst in doc.items()})


def assignment_to_dict(a: FractionalAssignment) -> dict:
    return {
        s: [
            {"bundle": list(bundle_key(b)), "p": _prob_out(a.row(s)[b])}
            for b in sorted(a.row(s), key=bundle_key)
        ]
        for s in a.students
    }


def assignment_from_dict(doc, mechanism: str = "") -> FractionalAssignment:
    entries = {}
    exact = True
    for s, rows in doc.items():
        row = {}
        for rec in rows:
            p = _prob_in(rec["p"])
            exact &= isinstance(p, Fraction)
            row[frozenset(rec["bundle"])] = p
        entries[s] = row
    return FractionalAssignment(entries, tuple(doc), "exact" if exact else "float", mechanism)


def _matching_out(m: DeterministicMatching) -> dict:
    return {s: (list(bundle_key(b)) if b else None) for s, b in m.assignment.items()}


def lottery_to_dict(lot: Lottery) -> dict:
    return {
        "epsilon": lot.epsilon,
        "support": [{"lambda": _prob_out(lam), "matching": _matching_out(m)} for m, lam in lot.support],
    }


def lottery_from_dict(doc) -> Lottery:
    support = []
    for rec in doc["support"]:
        m = DeterministicMatching({s: (frozenset(b) if b is not None else None) for s, b in rec["matching"].items()})
        support.append((m, _prob_in(rec["lambda"])))
    return Lottery(tuple(support), doc.get("epsilon", 0.0))


_TO_DICT = {
    Instance: instance_to_dict,
    PreferenceProfile: profile_to_dict,
    FractionalAssignment: assignment_to_dict,
    Lottery: lottery_to_dict,
}


def to_dict(x) -> dict:
    try:
        return _TO_DICT[type(x)](x)
    except KeyError:
        raise TypeError(f"cannot serialize {type(x).__name__}") from None


def serialize(x, indent: Optional[int] = None) -> str:
    """JSON text for an Instance, PreferenceProfile, FractionalAssignment or Lottery."""
    return json.dumps(to_dict(x), indent=indent, sort_keys=False)


def load_profile(text: str) -> PreferenceProfile:
    return profile_from_dict(json.loads(text))


def load_assignment(text: str) -> FractionalAssignment:
    return assignment_from_dict(json.loads(text))


def load_lottery(text: str) -> Lottery:
    return lottery_from_dict(json.loads(text))
