import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from courseassign.mechanisms import (
    enumerate_brsd_exact,
    estimate_brsd,
    permutation_block,
    run_bps,
    run_brsd_once,
)
from courseassign.model import InstanceError

from conftest import make_instance, profile
import oracles

F = Fraction


def B(*g):
    return frozenset(g)


# ---------------------------------------------------------------- BPS


def test_bps_single_student():
    inst = make_instance({"c": [("A", 1)]}, ["s"])
    x, trace = run_bps(inst, profile({"s": [{"A"}]}))
    assert x.row("s") == {B("A"): 1}
    assert trace.breakpoints[-1] == 1


def test_bps_symmetric(symmetric):
    inst, prof = symmetric
    x, trace = run_bps(inst, prof)
    for s in ("s1", "s2"):
        assert x.row(s) == {B("A"): F(1, 2), B("B"): F(1, 2)}
    assert trace.breakpoints[0] == F(1, 2)
    assert trace.events[0].exhausted == ("A",)


def test_bps_bundle_example(example_e):
    inst, prof = example_e
    x, trace = run_bps(inst, prof)
    assert x.row("s1") == {B("x1", "y1"): F(1, 2)}
    assert x.row("s2") == {B("x1", "y1"): F(1, 2), B("y2"): F(1, 2)}
    assert x.mass("s1") == F(1, 2)
    ev = trace.events[0]
    assert ev.time == F(1, 2) and set(ev.exhausted) == {"x1", "y1"}
    assert ev.switches["s1"] == (B("x1", "y1"), None)
    assert x.check(inst) == []


def test_bps_rejects_unknown_group():
    inst = make_instance({"c": [("A", 1)]}, ["s"])
    with pytest.raises(InstanceError):
        run_bps(inst, profile({"s": [{"Z"}]}))


def random_unit_market(seed):
    rng = np.random.default_rng(seed)
    n_obj = int(rng.integers(1, 5))
    n_st = int(rng.integers(1, 7))
    caps = {f"o{k}": int(rng.integers(1, 3)) for k in range(n_obj)}
    prefs = {}
    for i in range(n_st):
        k = int(rng.integers(0, n_obj + 1))
        prefs[f"s{i}"] = [str(o) for o in rng.permutation(list(caps))[:k]]
    return caps, prefs


@pytest.mark.parametrize("seed", range(40))
def test_bps_reduces_to_ps(seed):
    caps, prefs = random_unit_market(seed)
    inst = make_instance({"c": list(caps.items())}, list(prefs))
    x, _ = run_bps(inst, profile({s: [{o} for o in lst] for s, lst in prefs.items()}))
    ref = oracles.unit_ps(caps, prefs)
    for s in prefs:
        assert x.row(s) == {B(o): v for o, v in ref[s].items() if v}


def random_bundle_market(seed, n_students=None, ell=2):
    rng = np.random.default_rng(seed)
    classes = {f"k{c}": [(f"k{c}g{j}", int(rng.integers(1, 3))) for j in range(int(rng.integers(1, 4)))] for c in range(ell)}
    n = n_students or int(rng.integers(1, 7))
    prefs = {}
    for i in range(n):
        lst = []
        for _ in range(int(rng.integers(0, 5))):
            b = set()
            for c, gs in classes.items():
                if rng.random() < 0.7:
                    b.add(gs[int(rng.integers(len(gs)))][0])
            if b and b not in lst:
                lst.append(b)
        prefs[f"s{i}"] = lst
    inst = make_instance(classes, list(prefs))
    return inst, profile(prefs), prefs


@pytest.mark.parametrize("seed", range(40))
def test_bps_exact_feasibility_and_trace(seed):
    inst, prof, _ = random_bundle_market(seed, ell=3)
    x, trace = run_bps(inst, prof)
    assert x.check(inst, tol=0) == []
    bp = trace.breakpoints
    assert bp == sorted(bp) and bp[-1] == 1 and all(0 < t <= 1 for t in bp)
    caps = inst.capacities
    usage = x.usage()
    for g in usage:
        assert usage[g] <= caps[g]
    for s in inst.students:
        # mass is one unless the student's list runs dry before the end
        if x.mass(s) < 1:
            alive = [b for b in prof[s] if all(usage.get(g, 0) < caps[g] for g in b)]
            assert alive == []


# ---------------------------------------------------------------- BRSD


def test_brsd_single_student():
    inst = make_instance({"c": [("A", 1), ("B", 1)]}, ["s"])
    m = run_brsd_once(inst, profile({"s": [{"B"}, {"A"}]}), ["s"])
    assert m["s"] == B("B")


def test_brsd_bundle_example_orders(example_e):
    inst, prof = example_e
    m = run_brsd_once(inst, prof, ["s2", "s1"])
    assert m["s2"] == B("x1", "y1") and m["s1"] is None
    m = run_brsd_once(inst, prof, ["s1", "s2"])
    assert m["s1"] == B("x1", "y1") and m["s2"] == B("y2")


def test_brsd_rejects_bad_permutation(example_e):
    inst, prof = example_e
    with pytest.raises(ValueError):
        run_brsd_once(inst, prof, ["s1"])


def test_enumeration_bundle_example(example_e):
    inst, prof = example_e
    x = enumerate_brsd_exact(inst, prof)
    assert x.row("s1") == {B("x1", "y1"): F(1, 2)}
    assert x.row("s2") == {B("x1", "y1"): F(1, 2), B("y2"): F(1, 2)}


def test_enumeration_single_student():
    inst = make_instance({"c": [("A", 1)]}, ["s"])
    assert enumerate_brsd_exact(inst, profile({"s": [{"A"}]})).row("s") == {B("A"): 1}


def test_enumeration_size_guard():
    inst = make_instance({"c": [("A", 1)]}, [f"s{i}" for i in range(10)])
    with pytest.raises(ValueError):
        enumerate_brsd_exact(inst, profile({}))


@pytest.mark.parametrize("seed", range(30))
def test_enumeration_matches_permutation_oracle(seed):
    inst, prof, prefs = random_bundle_market(seed)
    ref = oracles.brsd_by_permutations(inst.capacities, prefs)
    x = enumerate_brsd_exact(inst, prof)
    for s in prefs:
        assert x.row(s) == {b: v for b, v in ref[s].items() if v}


@pytest.mark.parametrize("seed", range(25))
def test_brsd_outcomes_feasible_and_pareto_efficient(seed):
    inst, prof, prefs = random_bundle_market(seed, n_students=int(np.random.default_rng(seed).integers(1, 5)))
    rng = np.random.default_rng(seed + 1000)
    for _ in range(3):
        perm = list(rng.permutation(list(inst.students)))
        m = run_brsd_once(inst, prof, perm)
        assert m.violations(inst) == {}
        assert not oracles.pareto_dominated(dict(m.assignment), inst.capacities, prefs)


def test_estimate_single_rep_is_a_matching(example_e):
    inst, prof = example_e
    x = estimate_brsd(inst, prof, reps=1, seed=5)
    for s in inst.students:
        assert set(x.row(s).values()) <= {1}


def test_estimate_symmetric_million():
    inst = make_instance({"c": [("A", 1), ("B", 1)]}, ["s1", "s2"])
    prof = profile({"s1": [{"A"}, {"B"}], "s2": [{"A"}, {"B"}]})
    reps = 10**6
    x = estimate_brsd(inst, prof, reps=reps, seed=1)
    assert abs(float(x.row("s1")[B("A")]) - 0.5) <= 3 * math.sqrt(0.25 / reps)


def test_estimate_deterministic_across_threads(example_e):
    inst, prof = example_e
    a = estimate_brsd(inst, prof, reps=10_000, seed=42, threads=1)
    b = estimate_brsd(inst, prof, reps=10_000, seed=42, threads=2)
    c = estimate_brsd(inst, prof, reps=10_000, seed=42)
    assert a == b == c
    assert estimate_brsd(inst, prof, reps=10_000, seed=43) != a


def test_permutation_blocks_are_permutations_and_uniform():
    perms = permutation_block(7, 0, 24_000, 3)
    assert all(sorted(p) == [0, 1, 2] for p in perms[:50])
    _, counts = np.unique(perms, axis=0, return_counts=True)
    assert len(counts) == 6
    # each of 3! orders has probability 1/6
    sd = math.sqrt(24_000 * (1 / 6) * (5 / 6))
    assert np.all(np.abs(counts - 4000) < 4 * sd)
    assert np.array_equal(permutation_block(7, 3, 10, 5), permutation_block(7, 3, 10, 5))
    assert not np.array_equal(permutation_block(7, 3, 10, 5), permutation_block(7, 4, 10, 5))


def test_three_student_unit_demand_estimate():
    inst = make_instance({"c": [("A", 1), ("B", 1)]}, ["s1", "s2", "s3"])
    prof = profile({"s1": [{"A"}, {"B"}], "s2": [{"A"}], "s3": [{"B"}, {"A"}]})
    exact = enumerate_brsd_exact(inst, prof)
    reps = 200_000
    est = estimate_brsd(inst, prof, reps=reps, seed=9)
    for s in inst.students:
        for b in set(exact.row(s)) | set(est.row(s)):
            p = float(exact.row(s).get(b, 0))
            sd = math.sqrt(max(p * (1 - p), 1e-12) / reps)
            assert abs(float(est.row(s).get(b, 0)) - p) <= 3 * sd + 1e-12
