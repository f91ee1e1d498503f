from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from courseassign.numeric import AssignmentLP, LPError, highs_max, min_norm_point, simplex_max, solve_lp

import oracles


def b(*g):
    return frozenset(g)


# ---------------------------------------------------------------- simplex


def test_simplex_small_textbook():
    res = simplex_max([3, 5], [[1, 0], [0, 2], [3, 2]], [4, 12, 18])
    assert res.value == 36 and res.x == [2, 6]


def test_simplex_needs_phase_one():
    # x + y >= 2 written as -x - y <= -2
    res = simplex_max([-1, -1], [[-1, -1], [1, 0], [0, 1]], [-2, 3, 3])
    assert res.value == -2


def test_simplex_infeasible_and_unbounded():
    with pytest.raises(LPError):
        simplex_max([1], [[1], [-1]], [1, -2])
    with pytest.raises(LPError):
        simplex_max([1, 0], [[0, 1]], [1])


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 3).flatmap(
        lambda n: st.tuples(
            st.lists(st.integers(-4, 6), min_size=n, max_size=n),
            st.lists(st.lists(st.integers(-2, 4), min_size=n, max_size=n), min_size=1, max_size=3),
            st.lists(st.integers(0, 8), min_size=3, max_size=3),
        )
    )
)
def test_simplex_agrees_with_vertex_enumeration(data):
    c, A, rhs = data
    # a box keeps every instance bounded; rhs >= 0 keeps the origin feasible
    n = len(c)
    A = A + [[1 if j == i else 0 for j in range(n)] for i in range(n)]
    rhs = rhs[: len(A) - n] + [5] * n
    ref = oracles.best_vertex(c, A, rhs)
    res = simplex_max(c, A, rhs)
    assert res.value == ref[0]
    assert all(sum(Fraction(a) * x for a, x in zip(row, res.x)) <= r for row, r in zip(A, rhs))


def test_highs_matches_exact():
    c, A, rhs = [3, 5], [[1, 0], [0, 2], [3, 2]], [4, 12, 18]
    assert highs_max(c, np.array(A, float), np.array(rhs, float)).value == pytest.approx(36)


# ---------------------------------------------------------------- assignment LP


def test_zero_objective():
    lp = AssignmentLP([("s", b("A"))], [0], {"A": 1})
    assert solve_lp(lp).value == 0


def test_dominant_column():
    lp = AssignmentLP([("s", b("A")), ("s", b("B"))], [1, Fraction(1, 2)], {"A": 1, "B": 1})
    res = solve_lp(lp)
    assert res.value == 1 and res.x == [1, 0]


@pytest.mark.parametrize("arith", ["exact", "float"])
def test_shared_seat_returns_a_vertex(arith):
    lp = AssignmentLP([("s1", b("A")), ("s2", b("A"))], [1, 1], {"A": 1})
    res = solve_lp(lp, arith)
    assert res.value == pytest.approx(1)
    assert sorted(float(v) for v in res.x) == [0.0, 1.0]


def test_fixed_and_removed_rows():
    vars_ = [("s1", b("A")), ("s2", b("A")), ("s2", b("B"))]
    lp = AssignmentLP(vars_, [1, 1, Fraction(1, 2)], {"A": 1, "B": 1}, fixed={0: 1})
    res = solve_lp(lp)
    # A is used by the fixed variable, so s2 falls back to B
    assert res.x == [1, 0, 1]
    lp = AssignmentLP(vars_, [1, 1, Fraction(1, 2)], {"A": 1, "B": 1}, removed={"A"}, fixed={0: 1})
    assert solve_lp(lp).x == [1, 1, 0]


def _random_lp(seed):
    rng = np.random.default_rng(seed)
    groups = ["A", "B", "C"]
    vars_ = []
    for s in ("s1", "s2", "s3"):
        for _ in range(2):
            k = rng.integers(1, 3)
            vars_.append((s, frozenset(rng.choice(groups, size=k, replace=False).tolist())))
    vars_ = list(dict.fromkeys(vars_))[:6]
    u = [Fraction(int(v), 4) for v in rng.integers(-2, 9, size=len(vars_))]
    caps = {g: int(rng.integers(1, 3)) for g in groups}
    return AssignmentLP(vars_, u, caps)


@pytest.mark.parametrize("seed", range(25))
def test_assignment_lp_vertex_property(seed):
    lp = _random_lp(seed)
    res = solve_lp(lp)
    free = lp.free_indices()
    rows = lp.rows(free)
    A = []
    rhs = []
    for _, _, cols, r in rows:
        row = [0] * len(free)
        for c in cols:
            row[c] = 1
        A.append(row)
        rhs.append(r)
    ref = oracles.best_vertex([lp.objective[k] for k in free], A, rhs)
    assert res.value == ref[0]
    # a vertex has at most as many fractional coordinates as tight rows
    frac = sum(1 for v in res.x if v.denominator != 1)
    tight = sum(1 for row, r in zip(A, rhs) if sum(a * v for a, v in zip(row, res.x)) == r)
    assert frac <= tight
    fl = solve_lp(lp, "float")
    assert fl.value == pytest.approx(float(res.value), abs=1e-9)


# ---------------------------------------------------------------- min-norm point


def test_single_point_hull():
    r = min_norm_point([0.3, 0.9], [[1.0, 0.0]])
    assert np.allclose(r.y, [1, 0]) and np.allclose(r.weights, [1])


def test_symmetric_segment():
    r = min_norm_point([0.5, 0.5], [[1.0, 0.0], [0.0, 1.0]])
    assert np.allclose(r.y, [0.5, 0.5], atol=1e-12)
    assert np.allclose(r.weights, [0.5, 0.5], atol=1e-12)


def test_interior_target_in_triangle():
    Z = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
    r = min_norm_point([0.2, 0.3], Z)
    assert r.distance <= 1e-9
    assert oracles.grid_projection([0.2, 0.3], Z) <= 1e-2


@settings(max_examples=150, deadline=None)
@given(
    st.lists(st.lists(st.floats(-2, 2), min_size=2, max_size=2), min_size=1, max_size=3),
    st.lists(st.floats(-3, 3), min_size=2, max_size=2),
)
def test_projection_against_grid(Z, target):
    r = min_norm_point(target, Z)
    grid = oracles.grid_projection(target, Z, steps=120)
    assert r.distance <= grid + 1e-9
    # the grid is within its spacing of the true optimum
    assert r.distance >= grid - 0.1


@settings(max_examples=100, deadline=None)
@given(
    st.integers(2, 6).flatmap(
        lambda d: st.tuples(
            st.lists(st.lists(st.integers(0, 1), min_size=d, max_size=d), min_size=1, max_size=10),
            st.lists(st.floats(0, 1), min_size=d, max_size=d),
        )
    )
)
def test_projection_optimality_conditions(data):
    Z, target = data
    Z = np.asarray(Z, float)
    t = np.asarray(target)
    r = min_norm_point(t, Z)
    assert np.all(r.weights >= 0) and r.weights.sum() == pytest.approx(1)
    assert np.count_nonzero(r.weights) <= Z.shape[1] + 1
    assert np.max((t - r.y) @ (Z - r.y).T) <= 1e-8
    # adding points never increases the distance
    r2 = min_norm_point(t, np.vstack([Z, np.ones(Z.shape[1])]))
    assert r2.distance <= r.distance + 1e-9
