"""
Evaluation metrics for random assignments.

Every student's outcome is a distribution over three kinds of tiers: the
bundles on their list (by rank), being unmatched, and receiving a bundle
they did not list. Tiers are ordered in that sequence; unlisted bundles are
treated as unacceptable and sit below being unmatched.

Exact inputs give exact outputs. Envy checks scale each student's row to
integers over a common denominator so pairwise comparisons avoid
``Fraction`` arithmetic in the inner loop.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from .model import FractionalAssignment, PreferenceProfile, bundle_key


class ProfileMismatch(ValueError):
    """An assignment puts mass on a bundle missing from the student's ranking."""


class SDVerdict(enum.Enum):
    FIRST_DOMINATES = "FirstDominates"
    SECOND_DOMINATES = "SecondDominates"
    EQUAL = "Equal"
    INCOMPARABLE = "Incomparable"


def _verdict(diffs: Iterable) -> SDVerdict:
    pos = neg = False
    for d in diffs:
        if d > 0:
            pos = True
        elif d < 0:
            neg = True
        if pos and neg:
            return SDVerdict.INCOMPARABLE
    if pos:
        return SDVerdict.FIRST_DOMINATES
    if neg:
        return SDVerdict.SECOND_DOMINATES
    return SDVerdict.EQUAL


def _split(dist: Mapping, ranks: Mapping, allow_unlisted: bool, who: str):
    """Listed mass per rank and total unlisted mass of one distribution."""
    by_rank: dict = {}
    unlisted = 0
    for b, v in dist.items():
        r = ranks.get(frozenset(b))
        if r is None:
            if not allow_unlisted:
                raise ProfileMismatch(f"{who}: bundle {list(bundle_key(b))} is not in the ranking")
            unlisted += v
        else:
            by_rank[r] = by_rank.get(r, 0) + v
    return by_rank, unlisted


def sd_compare(p_i: Mapping, q_i: Mapping, ranking: Sequence, allow_unlisted: bool = False) -> SDVerdict:
    """Stochastic-dominance verdict between two bundle distributions of one student.

    ``p_i`` and ``q_i`` map bundles to probabilities; the remaining mass is
    the probability of staying unmatched. Cumulative probabilities of
    at-least-as-good outcomes are compared after every listed rank and after
    the unmatched tier.

    Raises
    ------
    ProfileMismatch
        If a supported bundle is not in ``ranking`` and ``allow_unlisted``
        is false.
    """
    ranks = {frozenset(b): r for r, b in enumerate(ranking, 1)}
    p_rank, p_out = _split(p_i, ranks, allow_unlisted, "first distribution")
    q_rank, q_out = _split(q_i, ranks, allow_unlisted, "second distribution")
    return _verdict(_cumulative_diffs(p_rank, p_out, q_rank, q_out))


def _cumulative_diffs(p_rank, p_out, q_rank, q_out):
    diff = 0
    for r in sorted(set(p_rank) | set(q_rank)):
        diff += p_rank.get(r, 0) - q_rank.get(r, 0)
        yield diff
    # after the unmatched tier both cumulatives equal one minus unlisted mass
    yield q_out - p_out


# --------------------------------------------------------------------------
# envy


def _common_denominator(p: FractionalAssignment) -> Optional[int]:
    if p.arithmetic != "exact":
        return None
    d = 1
    for row in p.entries.values():
        for v in row.values():
            if isinstance(v, Fraction):
                d = math.lcm(d, v.denominator)
            elif not isinstance(v, int):
                return None
    return d


def envy_counts(p: FractionalAssignment, profiles: PreferenceProfile, tol: float = 0.0):
    """Numbers of students failing strong and weak SD-envy-freeness.

    Student ``i`` fails the strong condition if some other student's row is
    not weakly SD-dominated by their own (under ``i``'s ranking), and fails
    the weak condition if some other row strictly SD-dominates their own.
    Bundles ``i`` did not list count as unacceptable to ``i``.

    Returns ``(strong, weak)``.
    """
    students = list(p.students)
    d = _common_denominator(p)
    if d is not None:
        rows = [[(b, int(v * d)) for b, v in p.row(s).items()] for s in students]
        eps = 0
    else:
        rows = [list(p.row(s).items()) for s in students]
        eps = tol

    strong = weak = 0
    for i, s in enumerate(students):
        ranks = profiles.rank_map(s)
        own: dict = {}
        for b, v in rows[i]:
            r = ranks.get(b)
            if r is None:
                raise ProfileMismatch(f"student {s!r} holds unlisted bundle {list(bundle_key(b))}")
            own[r] = own.get(r, 0) + v
        s_fail = w_fail = False
        for j in range(len(students)):
            if j == i:
                continue
            other: dict = {}
            out = 0
            for b, v in rows[j]:
                r = ranks.get(b)
                if r is None:
                    out += v
                else:
                    other[r] = other.get(r, 0) + v
            pos = neg = False
            for diff in _cumulative_diffs(own, 0, other, out):
                if diff > eps:
                    pos = True
                elif diff < -eps:
                    neg = True
            if neg:
                s_fail = True
                if not pos:
                    w_fail = True
                    break
        strong += s_fail
        weak += w_fail
    return strong, weak


# --------------------------------------------------------------------------
# popularity and SD-prefer counts


def _check_same_students(p: FractionalAssignment, q: FractionalAssignment):
    if set(p.students) != set(q.students):
        missing = sorted(set(p.students) ^ set(q.students))
        raise ValueError(f"assignments cover different students: {missing[:5]}")


def _tiers(row: Mapping, ranks: Mapping, mass_one):
    """(tier, probability) pairs; tier R+1 is unmatched, infinity is unlisted."""
    out = []
    rest = mass_one
    unmatched_tier = len(ranks) + 1
    for b, v in row.items():
        r = ranks.get(b)
        out.append((r if r is not None else math.inf, v))
        rest -= v
    if rest != 0:
        out.append((unmatched_tier, rest))
    return out


def _one(p: FractionalAssignment):
    return Fraction(1) if p.arithmetic == "exact" else 1.0


def popularity_terms(p: FractionalAssignment, q: FractionalAssignment, profiles: PreferenceProfile) -> dict:
    """Per-student contribution to ``popularity(p, q)``."""
    _check_same_students(p, q)
    one = _one(p) if p.arithmetic == q.arithmetic == "exact" else 1.0
    out = {}
    for s in p.students:
        ranks = profiles.rank_map(s)
        tp = _tiers(p.row(s), ranks, one)
        tq = _tiers(q.row(s), ranks, one)
        acc = 0 * one
        for a, va in tp:
            for b, vb in tq:
                if a < b:
                    acc += va * vb
                elif b < a:
                    acc -= va * vb
        out[s] = acc
    return out


def popularity(p: FractionalAssignment, q: FractionalAssignment, profiles: PreferenceProfile):
    """Expected pairwise-comparison margin of ``p`` over ``q``, summed over students.

    Outcomes are compared by tier: listed bundles by rank, then unmatched,
    then unlisted. Two distinct unlisted bundles tie.
    """
    terms = popularity_terms(p, q, profiles)
    one = _one(p) if p.arithmetic == q.arithmetic == "exact" else 1.0
    return sum(terms.values(), 0 * one)


def sd_prefer_counts(p: FractionalAssignment, q: FractionalAssignment, profiles: PreferenceProfile):
    """``(count_p, count_q, rest)``: students strictly SD-preferring ``p``, ``q``, or neither."""
    _check_same_students(p, q)
    a = b = rest = 0
    for s in p.students:
        v = sd_compare(p.row(s), q.row(s), profiles[s])
        if v is SDVerdict.FIRST_DOMINATES:
            a += 1
        elif v is SDVerdict.SECOND_DOMINATES:
            b += 1
        else:
            rest += 1
    return a, b, rest


# --------------------------------------------------------------------------
# rank statistics


def _mass_by_rank(p: FractionalAssignment, profiles: PreferenceProfile) -> dict:
    out: dict = {}
    for s in p.students:
        ranks = profiles.rank_map(s)
        for b, v in p.row(s).items():
            r = ranks.get(b)
            if r is None:
                raise ProfileMismatch(f"student {s!r} holds unlisted bundle {list(bundle_key(b))}")
            out[r] = out.get(r, 0) + v
    return out


def max_rank(profiles: PreferenceProfile) -> int:
    return max((len(lst) for lst in profiles.rankings.values()), default=0)


def aupcr(p: FractionalAssignment, profiles: PreferenceProfile, R: Optional[int] = None):
    """Area under the rank-profile curve as a fraction of ``R * |S|``.

    ``R`` defaults to the longest list. Sums, over every rank cut-off
    ``r = 1..R``, the expected number of students matched at rank ``r`` or
    better, divided by ``|S|`` and averaged over cut-offs.
    """
    if R is None:
        R = max_rank(profiles)
    if R < 1:
        raise ValueError("R must be at least 1")
    n = len(p.students)
    if n == 0:
        raise ValueError("assignment has no students")
    mass = _mass_by_rank(p, profiles)
    total = 0 * _one(p)
    cum = 0 * _one(p)
    for r in range(1, R + 1):
        cum += mass.get(r, 0)
        total += cum
    if p.arithmetic == "exact":
        return Fraction(total) / (R * n)
    return total / (R * n)


@dataclass(frozen=True)
class MetricsReport:
    students: int
    expected_size: object
    expected_rank: object
    expected_rank_raw: object
    expected_rank_unmatched_last: object
    prob_top_k: dict
    profile: tuple
    aupcr: object
    envy: Optional[tuple] = None
    popularity_vs: Optional[dict] = None

    def to_dict(self) -> dict:
        def num(x):
            return None if x is None else float(x)

        doc = {
            "students": self.students,
            "expectedSize": num(self.expected_size),
            "expectedRank": num(self.expected_rank),
            "expectedRankRaw": num(self.expected_rank_raw),
            "expectedRankUnmatchedLast": num(self.expected_rank_unmatched_last),
            "probTopK": {str(k): float(v) for k, v in self.prob_top_k.items()},
            "aupcr": num(self.aupcr),
            "profile": [{"rank": r, "probMatchPct": float(m), "aupcPct": float(c)} for r, m, c in self.profile],
        }
        exact = {
            k: str(v)
            for k, v in (
                ("expectedSize", self.expected_size),
                ("expectedRank", self.expected_rank),
                ("aupcr", self.aupcr),
            )
            if isinstance(v, Fraction)
        }
        if exact:
            doc["exact"] = exact
        if self.envy is not None:
            doc["envy"] = {"strong": self.envy[0], "weak": self.envy[1]}
        if self.popularity_vs is not None:
            pv = dict(self.popularity_vs)
            out = {
                "score": float(pv["score"]),
                "perStudent": float(pv["per_student"]),
                "sdPrefer": dict(zip(("first", "second", "neither"), pv["sd_prefer"])),
            }
            if isinstance(pv["score"], Fraction):
                out["scoreExact"] = str(pv["score"])
            doc["popularityVs"] = out
        return doc


def summary(
    p: FractionalAssignment,
    profiles: PreferenceProfile,
    ks: Sequence[int] = (1, 10, 100),
    R: Optional[int] = None,
    envy: bool = True,
    against: Optional[FractionalAssignment] = None,
) -> MetricsReport:
    """Size, rank, profile, AUPCR and optionally envy and popularity of ``p``.

    ``expected_rank`` averages ranks over matched mass. ``expected_rank_raw``
    is the unnormalised ``sum p * rank`` and ``expected_rank_unmatched_last``
    averages over all students with an unmatched student counted one below
    the end of their own list.
    """
    n = len(p.students)
    if n == 0:
        raise ValueError("assignment has no students")
    exact = p.arithmetic == "exact"
    one = _one(p)
    zero = 0 * one
    mass = _mass_by_rank(p, profiles)
    size = sum(mass.values(), zero)
    raw = sum((r * v for r, v in mass.items()), zero)
    tail = zero
    for s in p.students:
        tail += (one - p.mass(s)) * (len(profiles[s]) + 1)

    def div(a, b):
        return Fraction(a) / b if exact else a / b

    exp_rank = div(raw, size) if size != 0 else None
    if R is None:
        R = max(max_rank(profiles), max(mass, default=0), 1)
    top = {k: div(sum((v for r, v in mass.items() if r <= k), zero), n) for k in ks}
    rows = []
    cum = zero
    for r in range(1, R + 1):
        m = mass.get(r, zero)
        cum += m
        rows.append((r, div(100 * m, n), div(100 * cum, n)))
    pop = None
    if against is not None:
        score = popularity(p, against, profiles)
        pop = {"score": score, "per_student": div(score, n), "sd_prefer": sd_prefer_counts(p, against, profiles)}
    return MetricsReport(
        students=n,
        expected_size=size,
        expected_rank=exp_rank,
        expected_rank_raw=raw,
        expected_rank_unmatched_last=div(raw + tail, n),
        prob_top_k=top,
        profile=tuple(rows),
        aupcr=aupcr(p, profiles, R),
        envy=envy_counts(p, profiles) if envy else None,
        popularity_vs=pop,
    )


def profile_csv(report: MetricsReport, digits: int = 3) -> str:
    """Rank profile as CSV with columns Rank, Prob match (%), AUPC (%)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["Rank", "Prob match (%)", "AUPC (%)"])
    for r, m, c in report.profile:
        w.writerow([r, f"{float(m):.{digits}f}", f"{float(c):.{digits}f}"])
    return buf.getvalue()
