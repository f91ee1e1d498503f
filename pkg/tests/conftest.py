from __future__ import annotations

import pytest

from courseassign.model import Instance, Lecture, PreferenceProfile, TimeSlot, TutorGroup

ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def slot(day="Mon", start=480, end=570):
    return TimeSlot(day, start, end)


def make_instance(layout: dict, students, lectures=()):
    """Instance from ``{class: [(group_id, capacity), ...]}``.

    Slots are placed on distinct Monday-to-Friday half-hours so no two
    groups share a time; the schedule content is irrelevant to mechanisms.
    """
    groups = []
    k = 0
    days = ("Mon", "Tue", "Wed", "Thu", "Fri")
    for cls, members in layout.items():
        for gid, cap in members:
            d, h = divmod(k, 12)
            start = 480 + 60 * h
            groups.append(TutorGroup(gid, cls, (TimeSlot(days[d % 5], start, start + 30),), cap))
            k += 1
    return Instance(tuple(layout), tuple(groups), tuple(lectures), tuple(students))


def profile(prefs: dict) -> PreferenceProfile:
    return PreferenceProfile({s: tuple(frozenset(b) for b in lst) for s, lst in prefs.items()})


@pytest.fixture
def example_e():
    """Two students, two classes: x1 (cap 1), y1 (cap 1), y2 (cap 2)."""
    inst = make_instance({"x": [("x1", 1)], "y": [("y1", 1), ("y2", 2)]}, ["s1", "s2"])
    prof = profile({"s1": [{"x1", "y1"}, {"x1", "y2"}], "s2": [{"x1", "y1"}, {"y2"}]})
    return inst, prof


@pytest.fixture
def symmetric():
    """Two students who both prefer A over B; one seat each."""
    inst = make_instance({"c": [("A", 1), ("B", 1)]}, ["s1", "s2"])
    prof = profile({"s1": [{"A"}, {"B"}], "s2": [{"A"}, {"B"}]})
    return inst, prof
