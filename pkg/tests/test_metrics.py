import csv
import io
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from courseassign.elicitation import build_profile
from courseassign.generator import GeneratorConfig, generate
from courseassign.mechanisms import enumerate_brsd_exact, run_bps
from courseassign.metrics import (
    ProfileMismatch,
    SDVerdict,
    aupcr,
    envy_counts,
    popularity,
    profile_csv,
    sd_compare,
    sd_prefer_counts,
    summary,
)
from courseassign.model import FractionalAssignment, PreferenceProfile

from conftest import make_instance, profile
import oracles

F = Fraction
R1, R2, R3 = frozenset({"a"}), frozenset({"b"}), frozenset({"c"})
RANKING = [R1, R2, R3]


def fa(rows):
    return FractionalAssignment({s: {frozenset(b): v for b, v in r.items()} for s, r in rows.items()}, tuple(rows))


# ---------------------------------------------------------------- sd_compare


def test_equal():
    p = {R1: F(1, 2), R2: F(1, 2)}
    assert sd_compare(p, dict(p), RANKING) is SDVerdict.EQUAL


def test_first_dominates():
    assert sd_compare({R1: 1}, {R2: 1}, RANKING) is SDVerdict.FIRST_DOMINATES
    assert sd_compare({R2: 1}, {R1: 1}, RANKING) is SDVerdict.SECOND_DOMINATES


def test_crossing_cumulatives_incomparable():
    p = {R1: F(6, 10), R3: F(4, 10)}
    q = {R1: F(1, 2), R2: F(1, 2)}
    assert sd_compare(p, q, RANKING) is SDVerdict.INCOMPARABLE


def test_unmatched_below_every_listed_bundle():
    assert sd_compare({R3: F(1, 10)}, {}, RANKING) is SDVerdict.FIRST_DOMINATES


def test_unlisted_bundle_is_an_error_unless_allowed():
    other = frozenset({"z"})
    with pytest.raises(ProfileMismatch):
        sd_compare({other: 1}, {}, RANKING)
    # unlisted counts as worse than staying unmatched
    assert sd_compare({}, {other: 1}, RANKING, allow_unlisted=True) is SDVerdict.FIRST_DOMINATES


dist = st.lists(st.fractions(0, 1, max_denominator=12), min_size=4, max_size=4).map(
    lambda v: {b: x / max(1, sum(v)) for b, x in zip([R1, R2, R3, frozenset({"d"})], v) if x}
)


@settings(max_examples=300, deadline=None)
@given(dist, dist)
def test_sd_compare_matches_cumulative_oracle(p, q):
    ranking = RANKING + [frozenset({"d"})]
    assert sd_compare(p, q, ranking).value == oracles.sd_verdict(p, q, ranking)


@settings(max_examples=200, deadline=None)
@given(dist, dist, dist)
def test_dominance_is_transitive(p, q, r):
    ranking = RANKING + [frozenset({"d"})]
    ok = (SDVerdict.FIRST_DOMINATES, SDVerdict.EQUAL)
    if sd_compare(p, q, ranking) in ok and sd_compare(q, r, ranking) in ok:
        assert sd_compare(p, r, ranking) in ok
    if sd_compare(p, q, ranking) is SDVerdict.EQUAL and sd_compare(q, r, ranking) is SDVerdict.EQUAL:
        assert sd_compare(p, r, ranking) is SDVerdict.EQUAL


# ---------------------------------------------------------------- envy


def test_identical_preferences_symmetric_mechanism(symmetric):
    inst, prof = symmetric
    x, _ = run_bps(inst, prof)
    assert envy_counts(x, prof) == (0, 0)
    assert envy_counts(enumerate_brsd_exact(inst, prof), prof) == (0, 0)


def test_envy_counts_simple_case():
    prof = profile({"s1": [{"a"}, {"b"}], "s2": [{"a"}, {"b"}]})
    x = fa({"s1": {("b",): 1}, "s2": {("a",): 1}})
    # s1 strictly prefers s2's share; s2 does not envy
    assert envy_counts(x, prof) == (1, 1)
    x = fa({"s1": {("a",): F(1, 2)}, "s2": {("a",): F(1, 4), ("b",): F(3, 4)}})
    # cumulatives (1/2, 1/2) and (1/4, 1) cross, so each student envies strongly
    assert envy_counts(x, prof) == (2, 0)


@pytest.mark.parametrize("seed", range(15))
def test_envy_counts_match_oracle(seed):
    rng = np.random.default_rng(seed)
    bundles = [frozenset({g}) for g in "abcd"] + [frozenset({"a", "c"}), frozenset({"b", "d"})]
    prefs = {}
    rows = {}
    for i in range(5):
        perm = rng.permutation(len(bundles))[: int(rng.integers(1, 5))]
        prefs[f"s{i}"] = [bundles[k] for k in perm]
        w = rng.integers(0, 4, size=len(perm))
        tot = int(w.sum()) + int(rng.integers(0, 3))
        rows[f"s{i}"] = {bundles[k]: F(int(v), max(tot, 1)) for k, v in zip(perm, w) if v}
    prof = PreferenceProfile(prefs)
    assert envy_counts(fa(rows), prof) == oracles.envy(rows, prefs)


def test_weak_never_exceeds_strong():
    inst, ps = generate(GeneratorConfig(students=7, classes=2, groups_per_class=3, capacity=2, seed=4))
    prof = build_profile(inst, ps)
    strong, weak = envy_counts(enumerate_brsd_exact(inst, prof), prof)
    assert weak <= strong


# ---------------------------------------------------------------- popularity


def test_popularity_self_is_zero(example_e):
    inst, prof = example_e
    x, _ = run_bps(inst, prof)
    assert popularity(x, x, prof) == 0


def test_popularity_single_term():
    prof = profile({"s1": [{"a"}, {"b"}]})
    p = fa({"s1": {("a",): 1}})
    q = fa({"s1": {("b",): 1}})
    assert popularity(p, q, prof) == 1 and popularity(q, p, prof) == -1


def test_popularity_rejects_different_students():
    prof = profile({"s1": [{"a"}], "s2": [{"a"}]})
    with pytest.raises(ValueError):
        popularity(fa({"s1": {}}), fa({"s2": {}}), prof)


def test_unmatched_beats_unlisted():
    prof = profile({"s1": [{"a"}]})
    p = fa({"s1": {}})
    q = fa({"s1": {("z",): 1}})
    assert popularity(p, q, prof) == 1


@settings(max_examples=150, deadline=None)
@given(dist, dist, dist, dist)
def test_popularity_antisymmetric_and_matches_oracle(p1, p2, q1, q2):
    prefs = {"s1": RANKING + [frozenset({"d"})], "s2": [R2, R1]}
    prof = PreferenceProfile(prefs)
    p = FractionalAssignment({"s1": p1, "s2": {b: v for b, v in p2.items() if b in (R1, R2)}}, ("s1", "s2"))
    q = FractionalAssignment({"s1": q1, "s2": {b: v for b, v in q2.items() if b in (R1, R2)}}, ("s1", "s2"))
    score = popularity(p, q, prof)
    assert score == -popularity(q, p, prof)
    assert score == oracles.popularity(p.entries, q.entries, prefs)
    assert popularity(p, p, prof) == 0


def test_sd_prefer_counts_hand_example():
    prof = profile({"s1": [{"a"}, {"b"}], "s2": [{"a"}, {"b"}], "s3": [{"a"}, {"b"}, {"c"}]})
    p = fa({"s1": {("a",): 1}, "s2": {("b",): 1}, "s3": {("a",): F(6, 10), ("c",): F(4, 10)}})
    q = fa({"s1": {("b",): 1}, "s2": {("a",): F(1, 2), ("b",): F(1, 2)}, "s3": {("a",): F(1, 2), ("b",): F(1, 2)}})
    # s1 prefers p, s2 prefers q, s3 incomparable
    assert sd_prefer_counts(p, q, prof) == (1, 1, 1)
    assert sd_prefer_counts(p, p, prof) == (0, 0, 3)


# ---------------------------------------------------------------- rank statistics


def test_aupcr_hand_example():
    prof = profile({"s1": [{"a"}, {"b"}], "s2": [{"a"}, {"b"}]})
    x = fa({"s1": {("a",): 1}, "s2": {("b",): 1}})
    assert aupcr(x, prof, R=2) == F(3, 4)


def test_aupcr_all_first():
    prof = profile({"s1": [{"a"}, {"b"}], "s2": [{"b"}, {"a"}]})
    x = fa({"s1": {("a",): 1}, "s2": {("b",): 1}})
    assert aupcr(x, prof) == 1


@settings(max_examples=100, deadline=None)
@given(st.lists(st.one_of(st.none(), st.integers(1, 6)), min_size=1, max_size=8), st.integers(6, 9))
def test_aupcr_equals_curve_integral(ranks, R):
    bundles = [frozenset({f"g{k}"}) for k in range(6)]
    prefs = {f"s{i}": bundles for i in range(len(ranks))}
    rows = {f"s{i}": ({bundles[r - 1]: F(1)} if r else {}) for i, r in enumerate(ranks)}
    x = FractionalAssignment(rows, tuple(rows))
    assert aupcr(x, PreferenceProfile(prefs), R) == oracles.aupcr_curve(ranks, R)
    # closed form sum (R - rank + 1) / (R |S|)
    assert aupcr(x, PreferenceProfile(prefs), R) == F(sum(R - r + 1 for r in ranks if r), R * len(ranks))


def test_summary_everyone_first():
    prof = profile({"s1": [{"a"}, {"b"}], "s2": [{"b"}, {"a"}]})
    rep = summary(fa({"s1": {("a",): 1}, "s2": {("b",): 1}}), prof, ks=(1,))
    assert rep.expected_rank == 1 and rep.expected_size == 2 and rep.prob_top_k[1] == 1
    assert rep.envy == (0, 0)


def test_summary_split_student():
    prof = profile({"s1": [{"a"}, {"b"}, {"c"}]})
    rep = summary(fa({"s1": {("a",): F(1, 2), ("c",): F(1, 2)}}), prof, ks=(1, 2))
    assert rep.expected_rank == 2 and rep.expected_size == 1
    assert rep.prob_top_k == {1: F(1, 2), 2: F(1, 2)}


def test_summary_rank_variants_and_profile_csv():
    prof = profile({"s1": [{"a"}, {"b"}], "s2": [{"a"}, {"b"}, {"c"}]})
    x = fa({"s1": {("b",): 1}, "s2": {}})
    rep = summary(x, prof)
    assert rep.expected_rank == 2
    assert rep.expected_rank_raw == 2
    # s2 unmatched counts as one below their three-bundle list
    assert rep.expected_rank_unmatched_last == F(2 + 4, 2)
    cum = [c for _, _, c in rep.profile]
    assert cum == sorted(cum) and cum[-1] <= 100
    rows = list(csv.reader(io.StringIO(profile_csv(rep))))
    assert rows[0] == ["Rank", "Prob match (%)", "AUPC (%)"]
    assert [r[0] for r in rows[1:]] == ["1", "2", "3"]
    assert rows[2][1] == "50.000" and rows[2][2] == "50.000"
    doc = rep.to_dict()
    assert doc["expectedRank"] == 2.0 and doc["exact"]["aupcr"] == str(rep.aupcr)


def test_summary_against_other_assignment(example_e):
    inst, prof = example_e
    x, _ = run_bps(inst, prof)
    rep = summary(x, prof, against=x)
    assert rep.popularity_vs["score"] == 0
    assert rep.popularity_vs["sd_prefer"] == (0, 0, 2)


@pytest.mark.parametrize("seed", range(20))
def test_bps_envy_free_generated(seed):
    inst, ps = generate(GeneratorConfig(students=20, classes=3, groups_per_class=4, capacity=3, seed=seed))
    prof = build_profile(inst, ps)
    x, _ = run_bps(inst, prof)
    assert envy_counts(x, prof) == (0, 0)
    assert summary(x, prof, envy=False).aupcr <= 1
