"""Synthetic course-assignment markets and student parameters for experiments and tests."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Union

import numpy as np

from .elicitation import ElicitationParameters
from .model import DAY_END, DAY_START, GRID, WEEKDAYS, Instance, Lecture, TimeSlot, TutorGroup


@dataclass(frozen=True)
class GeneratorConfig:
    students: int = 50
    classes: int = 3
    groups_per_class: int = 4
    capacity: Union[int, tuple] = 5
    seed: int = 0
    slot_durations: tuple = (90, 120)
    lectures_per_class: int = 1
    lecture_slots: int = 2
    lecture_attendance: float = 0.5
    restrict_prob: float = 0.15
    min_window: int = 480
    min_lunch_choices: tuple = (0, 0, 0, 30)
    min_gap_choices: tuple = (0, 15)
    priority_range: tuple = (1, 5)
    max_bundles: int = 200

    def __post_init__(self):
        for name in ("students", "classes", "groups_per_class"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        cap = self.capacity
        lo, hi = (cap, cap) if isinstance(cap, int) else tuple(cap)
        if lo < 1 or hi < lo:
            raise ValueError("capacity must be >= 1 (or a range lo <= hi with lo >= 1)")
        lo_p, hi_p = self.priority_range
        if not 1 <= lo_p <= hi_p <= 5:
            raise ValueError("priority_range must lie inside [1, 5]")

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}

    @classmethod
    def from_dict(cls, doc) -> "GeneratorConfig":
        known = {f for f in cls.__dataclass_fields__}
        kwargs = {k: (tuple(v) if isinstance(v, list) else v) for k, v in doc.items() if k in known}
        return cls(**kwargs)


LECTURE_LATEST_END = 1080  # lectures end by 18:00 so a lecture day never exceeds ten hours


def _starts(duration):
    return list(range(DAY_START, DAY_END - duration + 1, GRID))


def _random_slot(rng, durations):
    dur = int(rng.choice(durations))
    day = WEEKDAYS[int(rng.integers(len(WEEKDAYS)))]
    starts = _starts(dur)
    s = int(starts[int(rng.integers(len(starts)))])
    return TimeSlot(day, s, s + dur)


def _clashes(a: TimeSlot, b: TimeSlot) -> bool:
    # keep one grid step between a tutorial and any lecture
    return a.day == b.day and a.start < b.end + GRID and b.start < a.end + GRID


def generate(cfg: GeneratorConfig):
    """Instance plus per-student elicitation parameters, deterministic in ``cfg.seed``.

    Each tutor group gets one slot on the half-hour grid at a random day and
    start, rejection-sampled so groups of a class start at distinct times
    and keep clear of every lecture. Lectures form a clash-free timetable
    between 08:00 and 18:00.
    When the week is too crowded, clashes are accepted after enough attempts.
    """
    rng = np.random.default_rng(cfg.seed)
    classes = tuple(f"c{k + 1}" for k in range(cfg.classes))
    lectures = []
    placed: list = []
    latest = LECTURE_LATEST_END - 90
    lecture_starts = [t for t in _starts(90) if t <= latest]
    for cls in classes:
        for _ in range(cfg.lectures_per_class):
            slots: list = []
            days = rng.permutation(len(WEEKDAYS))[: cfg.lecture_slots]
            for d in sorted(days):
                for attempt in range(200):
                    s = int(lecture_starts[int(rng.integers(len(lecture_starts)))])
                    slot = TimeSlot(WEEKDAYS[int(d)], s, s + 90)
                    if not any(_clashes(slot, t) for t in placed):
                        break
                placed.append(slot)
                slots.append(slot)
            lectures.append(Lecture(cls, tuple(slots)))

    max_starts = sum(len(_starts(min(cfg.slot_durations))) for _ in WEEKDAYS)
    if cfg.groups_per_class > max_starts:
        raise ValueError(f"cannot place {cfg.groups_per_class} groups at distinct times (grid has {max_starts})")

    groups = []
    lo, hi = (cfg.capacity, cfg.capacity) if isinstance(cfg.capacity, int) else cfg.capacity
    for cls in classes:
        busy = [t for lec in lectures for t in lec.slots]
        taken = set()
        k = 0
        attempts = 0
        while k < cfg.groups_per_class:
            attempts += 1
            if attempts > 200 * cfg.groups_per_class + 1000:
                raise ValueError(f"could not tile {cfg.groups_per_class} groups for class {cls}")
            slot = _random_slot(rng, cfg.slot_durations)
            if (slot.day, slot.start) in taken:
                continue
            if any(_clashes(slot, t) for t in busy) and attempts < 100 * cfg.groups_per_class:
                continue
            taken.add((slot.day, slot.start))
            cap = int(rng.integers(lo, hi + 1))
            groups.append(TutorGroup(f"{cls}-{k + 1:02d}", cls, (slot,), cap))
            k += 1

    width = len(str(cfg.students))
    students = tuple(f"s{k + 1:0{width}d}" for k in range(cfg.students))
    instance = Instance(classes, tuple(groups), tuple(lectures), students)

    params = {}
    lo_p, hi_p = cfg.priority_range
    for s in students:
        attend = tuple(c for c in classes if rng.random() < cfg.lecture_attendance)
        ranges = {}
        for d in WEEKDAYS:
            if rng.random() < cfg.restrict_prob:
                width_min = cfg.min_window + GRID * int(rng.integers(0, (DAY_END - DAY_START - cfg.min_window) // GRID + 1))
                a = DAY_START + GRID * int(rng.integers(0, (DAY_END - DAY_START - width_min) // GRID + 1))
                ranges[d] = ((a, a + width_min),)
            else:
                ranges[d] = ((DAY_START, DAY_END),)
        prios = {d: int(rng.integers(lo_p, hi_p + 1)) for d in WEEKDAYS}
        params[s] = ElicitationParameters(
            classes=classes,
            lectures=attend,
            ranges=ranges,
            priorities=prios,
            min_lunch=int(rng.choice(cfg.min_lunch_choices)),
            min_gap=int(rng.choice(cfg.min_gap_choices)),
            max_bundles=cfg.max_bundles,
        )
    return instance, params
