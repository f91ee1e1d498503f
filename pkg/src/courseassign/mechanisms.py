"""
Random assignment mechanisms: Bundled Probabilistic Serial (BPS) and
Bundled Random Serial Dictatorship (BRSD).

BPS is simulated event by event in exact rational time. Every student eats
their best bundle whose groups all have seats left; the clock advances to
the next moment some group runs out, at which point every bundle containing
an exhausted group disappears for everyone. A student eats each bundle in a
single contiguous spell, so ``x[i][b]`` is simply the length of that spell.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .model import DeterministicMatching, FractionalAssignment, Instance, InstanceError, PreferenceProfile

MAX_EXACT_STUDENTS = 9
BLOCK = 4096


@dataclass(frozen=True)
class EatingEvent:
    time: Fraction
    exhausted: tuple
    switches: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EatingTrace:
    events: tuple

    @property
    def breakpoints(self) -> list:
        return [e.time for e in self.events]

    def to_dict(self) -> dict:
        return {
            "events": [
                {
                    "t": str(e.time),
                    "exhausted": list(e.exhausted),
                    "switches": {
                        s: [sorted(old) if old else None, sorted(new) if new else None]
                        for s, (old, new) in e.switches.items()
                    },
                }
                for e in self.events
            ]
        }


def _check_profile(instance: Instance, profiles: PreferenceProfile) -> None:
    known = set(instance.students)
    for s, lst in profiles.rankings.items():
        if s not in known:
            raise InstanceError(f"profile references unknown student {s!r}")
        for b in lst:
            for g in b:
                if not instance.has_group(g):
                    raise InstanceError(f"student {s!r} ranks unknown group {g!r}")


def run_bps(instance: Instance, profiles: PreferenceProfile):
    """Exact BPS outcome and its eating trace.

    Returns ``(FractionalAssignment, EatingTrace)`` with rational
    probabilities; demand and supply hold with zero tolerance.
    """
    _check_profile(instance, profiles)
    students = list(instance.students)
    pos = {s: k for k, s in enumerate(students)}
    lists = {s: profiles[s] for s in students}
    remaining = {g.id: Fraction(g.capacity) for g in instance.groups}
    exhausted: set = set()
    ptr = {s: 0 for s in students}
    current: dict = {}
    since: dict = {}
    eaters_of: dict = {g: set() for g in remaining}
    x: dict = {s: {} for s in students}
    t = Fraction(0)
    events = []

    def select(s):
        lst = lists[s]
        k = ptr[s]
        while k < len(lst) and not exhausted.isdisjoint(lst[k]):
            k += 1
        ptr[s] = k
        return lst[k] if k < len(lst) else None

    def start(s, b):
        current[s] = b
        since[s] = t
        if b is not None:
            for g in b:
                eaters_of[g].add(s)

    def stop(s):
        b = current.get(s)
        if b is not None:
            if t > since[s]:
                x[s][b] = x[s].get(b, Fraction(0)) + (t - since[s])
            for g in b:
                eaters_of[g].discard(s)

    for s in students:
        start(s, select(s))

    while t < 1:
        dem = {g: len(e) for g, e in eaters_of.items() if e}
        if not dem:
            break
        delta = min(remaining[g] / d for g, d in dem.items())
        step = min(delta, 1 - t)
        t += step
        newly = []
        for g, d in dem.items():
            remaining[g] -= step * d
            if remaining[g] == 0:
                newly.append(g)
        if not newly:
            events.append(EatingEvent(t, ()))
            continue
        exhausted.update(newly)
        affected = set()
        for g in newly:
            affected |= eaters_of[g]
        switches = {}
        for s in sorted(affected, key=pos.__getitem__):
            old = current[s]
            stop(s)
            new = select(s) if t < 1 else None
            start(s, new)
            switches[s] = (old, new)
        events.append(EatingEvent(t, tuple(sorted(newly)), switches))

    for s in students:
        stop(s)
        current[s] = None
    if not events or events[-1].time != 1:
        events.append(EatingEvent(Fraction(1), ()))
    result = FractionalAssignment(x, tuple(students), "exact", "bps")
    return result, EatingTrace(tuple(events))


# --------------------------------------------------------------------------
# BRSD


class _Compiled:
    """Index-based view of a profile for fast serial-dictatorship runs."""

    def __init__(self, instance: Instance, profiles: PreferenceProfile):
        _check_profile(instance, profiles)
        self.students = list(instance.students)
        self.gidx = {g.id: k for k, g in enumerate(instance.groups)}
        self.caps = [g.capacity for g in instance.groups]
        self.lists = [
            [tuple(self.gidx[g] for g in sorted(b)) for b in profiles[s]] for s in self.students
        ]
        self.bundles = [list(profiles[s]) for s in self.students]

    def run(self, order) -> list:
        """Chosen list index per student (``-1`` = unmatched) for a student order."""
        left = list(self.caps)
        pick = [-1] * len(self.students)
        for i in order:
            for k, gs in enumerate(self.lists[i]):
                if all(left[g] > 0 for g in gs):
                    for g in gs:
                        left[g] -= 1
                    pick[i] = k
                    break
        return pick


def run_brsd_once(instance: Instance, profiles: PreferenceProfile, perm: Sequence[str]) -> DeterministicMatching:
    """Serial dictatorship along ``perm``: each student takes their best bundle still fully available."""
    comp = _Compiled(instance, profiles)
    if sorted(perm) != sorted(comp.students):
        raise ValueError("perm is not a permutation of the instance's students")
    pos = {s: k for k, s in enumerate(comp.students)}
    pick = comp.run([pos[s] for s in perm])
    return DeterministicMatching(
        {s: (comp.bundles[i][pick[i]] if pick[i] >= 0 else None) for i, s in enumerate(comp.students)}
    )


def permutation_block(seed: int, block: int, size: int, n: int) -> np.ndarray:
    """Rows of uniformly random permutations of ``range(n)``.

    Row ``r`` of block ``k`` is the permutation of replication
    ``k * BLOCK + r``; it depends only on ``(seed, k)``. Fisher-Yates,
    vectorised over rows, fed by a Philox stream keyed on the seed with
    the block index in the high counter word.
    """
    bitgen = np.random.Philox(key=seed % (1 << 64), counter=[0, 0, 0, block])
    u = np.random.Generator(bitgen).random((size, n))
    perms = np.tile(np.arange(n), (size, 1))
    rows = np.arange(size)
    for i in range(n - 1, 0, -1):
        j = (u[:, i] * (i + 1)).astype(np.int64)
        tmp = perms[rows, i].copy()
        perms[rows, i] = perms[rows, j]
        perms[rows, j] = tmp
    return perms


def _count_block(args):
    comp, seed, block, size = args
    n = len(comp.students)
    perms = permutation_block(seed, block, size, n)
    counts = [dict() for _ in range(n)]
    cache: dict = {}
    cacheable = n <= 10
    for row in perms:
        if cacheable:
            key = row.tobytes()
            pick = cache.get(key)
            if pick is None:
                pick = cache[key] = comp.run(row.tolist())
        else:
            pick = comp.run(row.tolist())
        for i, k in enumerate(pick):
            if k >= 0:
                c = counts[i]
                c[k] = c.get(k, 0) + 1
    return counts


def estimate_brsd(
    instance: Instance,
    profiles: PreferenceProfile,
    reps: int,
    seed: int,
    threads: int = 1,
) -> FractionalAssignment:
    """Empirical BRSD assignment over ``reps`` random orders.

    Entries are exact fractions ``count / reps``. The permutation of each
    replication is a function of ``(seed, replication index)`` alone, and
    per-block counts are merged additively, so the output does not depend on
    ``threads``.
    """
    if reps < 1:
        raise ValueError("reps must be positive")
    comp = _Compiled(instance, profiles)
    n = len(comp.students)
    nblocks = math.ceil(reps / BLOCK)
    jobs = [(comp, seed, k, min(BLOCK, reps - k * BLOCK)) for k in range(nblocks)]
    if threads > 1 and nblocks > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_count_block, jobs))
    else:
        parts = [_count_block(j) for j in jobs]
    total = [dict() for _ in range(n)]
    for part in parts:
        for i, c in enumerate(part):
            for k, v in c.items():
                total[i][k] = total[i].get(k, 0) + v
    entries = {
        s: {comp.bundles[i][k]: Fraction(v, reps) for k, v in total[i].items()}
        for i, s in enumerate(comp.students)
    }
    return FractionalAssignment(entries, tuple(comp.students), "exact", f"brsd({reps})")


def enumerate_brsd_exact(instance: Instance, profiles: PreferenceProfile) -> FractionalAssignment:
    """Exact BRSD probabilities by walking all orders of at most nine students.

    Subtrees are memoised on (students already served, seats left), which is
    all that determines the rest of the run.
    """
    comp = _Compiled(instance, profiles)
    n = len(comp.students)
    if n > MAX_EXACT_STUDENTS:
        raise ValueError(f"exact BRSD enumeration is limited to {MAX_EXACT_STUDENTS} students, got {n}")
    memo: dict = {}

    def walk(mask, left):
        """Counts of (student, list index) over all orders of the unserved students."""
        key = (mask, left)
        hit = memo.get(key)
        if hit is not None:
            return hit
        out: dict = {}
        for i in range(n):
            if mask >> i & 1:
                continue
            k_pick = -1
            new_left = left
            for k, gs in enumerate(comp.lists[i]):
                if all(left[g] > 0 for g in gs):
                    tmp = list(left)
                    for g in gs:
                        tmp[g] -= 1
                    new_left = tuple(tmp)
                    k_pick = k
                    break
            rest = bin(~(mask | 1 << i) & ((1 << n) - 1)).count("1")
            if k_pick >= 0:
                out[(i, k_pick)] = out.get((i, k_pick), 0) + math.factorial(rest)
            for key2, v in walk(mask | 1 << i, new_left).items():
                out[key2] = out.get(key2, 0) + v
        memo[key] = out
        return out

    counts = walk(0, tuple(comp.caps)) if n else {}
    total = math.factorial(n)
    entries: dict = {s: {} for s in comp.students}
    for (i, k), v in counts.items():
        entries[comp.students[i]][comp.bundles[i][k]] = Fraction(v, total)
    return FractionalAssignment(entries, tuple(comp.students), "exact", "brsd-exact")


def simulate_fcfs(instance: Instance, profiles: PreferenceProfile, reps: int = 1000, seed: Optional[int] = None):
    """First-come first-served modelled as BRSD over uniformly random arrival orders."""
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % (1 << 63))
    return estimate_brsd(instance, profiles, reps, seed)
