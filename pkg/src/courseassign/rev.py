"""
Revealed-preference test: is a bundle ranking representable by additive
item weights plus pairwise adjustments?

The utility of a bundle ``b`` is ``sum_i w_i + sum_{i<j in b} w_ij`` with
``w_i`` in ``[0, 1]`` and ``w_ij >= -2``. Every consecutive pair in the
ranking must be separated by at least ``gamma``, and each pair adjustment
must keep ``w_i + w_j + w_ij >= 0``; both kinds of constraint may be
violated at a cost of one unit of error per unit of slack. A zero optimum
certifies the ranking is representable.

With ``gamma = 0`` the all-zero weights satisfy everything, so a positive
margin is what makes the test informative.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .model import bundle_key
from .numeric import highs_max, simplex_max

EXACT_LIMIT = 4000  # rows * columns below which the exact solver is used in auto mode


@dataclass(frozen=True)
class RevInstance:
    """A strict ranking of bundles over a set of items.

    ``courses`` defaults to the union of the ranked bundles.
    """

    ranking: tuple
    courses: tuple = ()
    gamma: float = 1e-3

    def __post_init__(self):
        ranking = tuple(frozenset(b) for b in self.ranking)
        if len(set(ranking)) != len(ranking):
            raise ValueError("ranking lists a bundle twice")
        union = sorted(set().union(*ranking)) if ranking else []
        courses = tuple(self.courses) or tuple(union)
        missing = set(union) - set(courses)
        if missing:
            raise ValueError(f"bundles use items outside courses: {sorted(missing)[:5]}")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        object.__setattr__(self, "ranking", ranking)
        object.__setattr__(self, "courses", courses)


@dataclass(frozen=True)
class RevResult:
    err: object
    weights: dict
    pair_weights: dict
    rank_errors: tuple
    pair_errors: dict
    arithmetic: str = "exact"
    gamma: object = 0

    def to_dict(self) -> dict:
        f = float
        return {
            "err": f(self.err),
            "errExact": str(self.err) if isinstance(self.err, Fraction) else None,
            "gamma": f(self.gamma),
            "arithmetic": self.arithmetic,
            "weights": {k: f(v) for k, v in self.weights.items()},
            "pairWeights": [{"pair": list(k), "w": f(v)} for k, v in self.pair_weights.items()],
            "rankErrors": [f(e) for e in self.rank_errors],
            "pairErrors": [{"pair": list(k), "eps": f(v)} for k, v in self.pair_errors.items() if v != 0],
        }


def _pairs(inst: RevInstance) -> list:
    # pairs that never share a bundle can take w_ij = 0 at no cost, so only
    # co-occurring pairs need variables
    seen = set()
    for b in inst.ranking:
        for pr in itertools.combinations(sorted(b), 2):
            seen.add(pr)
    return sorted(seen)


def solve_rev(inst: RevInstance, arithmetic: str = "auto") -> RevResult:
    """Minimum total error of the representability LP and a witness.

    Columns are ``w_i`` (bounded by one through explicit rows), shifted
    pair weights ``v_ij = w_ij + 2 >= 0``, one ``eps_b`` per consecutive
    pair and one ``eps_ij`` per item pair. ``arithmetic`` is ``"exact"``,
    ``"float"`` (HiGHS) or ``"auto"``, which picks exact for small LPs.
    """
    if len(inst.ranking) < 2:
        raise ValueError("ranking must contain at least two bundles")
    courses = list(inst.courses)
    ci = {c: k for k, c in enumerate(courses)}
    pairs = _pairs(inst)
    pi = {p: k for k, p in enumerate(pairs)}
    nC, nP, nR = len(courses), len(pairs), len(inst.ranking) - 1
    off_v, off_eb, off_ep = nC, nC + nP, nC + nP + nR
    ncols = nC + 2 * nP + nR
    nrows = nR + nP + nC
    if arithmetic == "auto":
        arithmetic = "exact" if nrows * ncols <= EXACT_LIMIT else "float"
    if arithmetic not in ("exact", "float"):
        raise ValueError(f"unknown arithmetic {arithmetic!r}")
    exact = arithmetic == "exact"
    gamma = Fraction(str(inst.gamma)) if exact else float(inst.gamma)

    def feats(b):
        lin = [ci[c] for c in b]
        prs = [pi[p] for p in itertools.combinations(sorted(b), 2)]
        return lin, prs

    rows_idx: list = []  # sparse rows as {col: coef}
    rhs: list = []
    for k in range(nR):
        b, b2 = inst.ranking[k], inst.ranking[k + 1]
        lin_b, pr_b = feats(b)
        lin_n, pr_n = feats(b2)
        row: dict = {}
        # u(b') - u(b) - eps_b <= -gamma, with w_ij = v_ij - 2
        for c in lin_n:
            row[c] = row.get(c, 0) + 1
        for c in lin_b:
            row[c] = row.get(c, 0) - 1
        for p in pr_n:
            row[off_v + p] = row.get(off_v + p, 0) + 1
        for p in pr_b:
            row[off_v + p] = row.get(off_v + p, 0) - 1
        row[off_eb + k] = -1
        rows_idx.append(row)
        rhs.append(-gamma + 2 * (len(pr_n) - len(pr_b)))
    for k, (a, b) in enumerate(pairs):
        # w_a + w_b + v_ab - 2 + eps_ab >= 0
        rows_idx.append({ci[a]: -1, ci[b]: -1, off_v + k: -1, off_ep + k: -1})
        rhs.append(-2)
    for k in range(nC):
        rows_idx.append({k: 1})
        rhs.append(1)

    c = [0] * ncols
    for k in range(nR + nP):
        c[off_eb + k] = -1

    if exact:
        A = [[Fraction(0)] * ncols for _ in rows_idx]
        for r, row in enumerate(rows_idx):
            for col, v in row.items():
                A[r][col] = Fraction(v)
        res = simplex_max([Fraction(v) for v in c], A, [Fraction(v) for v in rhs])
        x = res.x
        err = -res.value
    else:
        from scipy.sparse import coo_matrix

        data, ri, cj = [], [], []
        for r, row in enumerate(rows_idx):
            for col, v in row.items():
                if v != 0:
                    ri.append(r)
                    cj.append(col)
                    data.append(float(v))
        A = coo_matrix((data, (ri, cj)), shape=(len(rows_idx), ncols)).tocsr()
        res = highs_max(np.asarray(c, dtype=float), A, np.asarray(rhs, dtype=float))
        x = [max(0.0, v) for v in res.x]
        err = max(0.0, -res.value)

    two = Fraction(2) if exact else 2.0
    return RevResult(
        err=err,
        weights={courses[k]: x[k] for k in range(nC)},
        pair_weights={pairs[k]: x[off_v + k] - two for k in range(nP)},
        rank_errors=tuple(x[off_eb + k] for k in range(nR)),
        pair_errors={pairs[k]: x[off_ep + k] for k in range(nP)},
        arithmetic=arithmetic,
        gamma=gamma,
    )


def utility(result: RevResult, b) -> object:
    """Witness utility of bundle ``b`` under ``result``'s weights."""
    u = sum((result.weights[i] for i in b), 0 * result.err)
    for pr in itertools.combinations(sorted(b), 2):
        u += result.pair_weights.get(pr, 0)
    return u


def additive_ranking(weights: dict, bundles: Sequence) -> tuple:
    """Bundles sorted by decreasing additive utility (ties broken by bundle key)."""
    return tuple(
        sorted((frozenset(b) for b in bundles), key=lambda b: (-sum(weights[i] for i in b), bundle_key(b)))
    )
