"""
Optimization kernel: vertex LP solving and projection onto a convex hull.

``simplex_max`` is a dense two-phase tableau simplex over
:class:`fractions.Fraction`; it always stops at a basic (vertex) solution.
The float path goes through HiGHS' dual simplex, which also returns basic
solutions. ``min_norm_point`` is Wolfe's corral algorithm run on the Gram
matrix of the hull points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence

import numpy as np

FLOAT_TOL = 1e-9
INTEGRALITY_TOL = 1e-7


class LPError(RuntimeError):
    pass


@dataclass
class LPResult:
    value: object
    x: list
    reduced_costs: Optional[list] = None
    pivots: int = 0


def _pivot(rows, basis, r, c, extra=()):
    prow = rows[r]
    pv = prow[c]
    if pv != 1:
        inv = 1 / pv
        prow = [v * inv if v else v for v in prow]
        rows[r] = prow
    nz = [j for j, v in enumerate(prow) if v]
    for i, row in enumerate(rows):
        if i != r and row[c]:
            a = row[c]
            for j in nz:
                row[j] -= a * prow[j]
    for row in extra:
        a = row[c]
        if a:
            for j in nz:
                row[j] -= a * prow[j]
    basis[r] = c


def _run(rows, obj, basis, ncols, allowed, max_pivots):
    """Primal simplex on ``rows``; ``obj`` holds reduced costs of a max problem."""
    pivots = 0
    degenerate = 0
    m = len(rows)
    while True:
        # Dantzig pricing, Bland's rule once a degenerate streak suggests cycling
        use_bland = degenerate > 50
        enter = -1
        best = 0
        for j in range(ncols):
            if not allowed[j]:
                continue
            d = obj[j]
            if d > 0:
                if use_bland:
                    enter = j
                    break
                if d > best:
                    best, enter = d, j
        if enter < 0:
            return pivots
        leave = -1
        ratio = None
        for i in range(m):
            a = rows[i][enter]
            if a > 0:
                q = rows[i][-1] / a
                if ratio is None or q < ratio or (q == ratio and basis[i] < basis[leave]):
                    ratio, leave = q, i
        if leave < 0:
            raise LPError("LP is unbounded")
        degenerate = degenerate + 1 if ratio == 0 else 0
        _pivot(rows, basis, leave, enter, (obj,))
        pivots += 1
        if pivots > max_pivots:
            raise LPError("pivot limit exceeded")


def simplex_max(c: Sequence, A: Sequence[Sequence], b: Sequence, max_pivots: int = 100_000) -> LPResult:
    """Maximise ``c.x`` subject to ``A x <= b``, ``x >= 0`` in exact arithmetic.

    Rows with negative right-hand side get an artificial variable and a
    phase-1 pass. Returns a basic optimal solution; raises :class:`LPError`
    when the LP is infeasible or unbounded.
    """
    n = len(c)
    m = len(A)
    c = [Fraction(v) for v in c]
    neg = [i for i in range(m) if b[i] < 0]
    na = len(neg)
    ncols = n + m + na
    rows = []
    basis = []
    art_of = {}
    for i in range(m):
        row = [Fraction(v) for v in A[i]] + [Fraction(0)] * (m + na) + [Fraction(b[i])]
        row[n + i] = Fraction(1)
        if b[i] < 0:
            row = [-v for v in row]
            k = n + m + len(art_of)
            art_of[i] = k
            row[k] = Fraction(1)
            basis.append(k)
        else:
            basis.append(n + i)
        rows.append(row)

    pivots = 0
    allowed = [True] * ncols
    if na:
        obj1 = [Fraction(0)] * (ncols + 1)
        for i, k in art_of.items():
            for j, v in enumerate(rows[i]):
                obj1[j] += v
            obj1[k] = Fraction(0)
        for k in art_of.values():
            obj1[k] = Fraction(0)
        # obj1 holds reduced costs of max(-sum(artificials)); obj1[-1] is sum of artificials.
        pivots += _run(rows, obj1, basis, ncols, allowed, max_pivots)
        if obj1[-1] != 0:
            raise LPError("LP is infeasible")
        art_cols = set(art_of.values())
        for i in range(m):
            if basis[i] in art_cols:
                for j in range(n + m):
                    if rows[i][j] != 0:
                        _pivot(rows, basis, i, j)
                        break
        for k in art_cols:
            allowed[k] = False

    obj = [Fraction(0)] * (ncols + 1)
    for j in range(n):
        obj[j] = c[j]
    for i in range(m):
        cb = obj[basis[i]]
        if cb:
            row = rows[i]
            for j in range(ncols + 1):
                if row[j]:
                    obj[j] -= cb * row[j]
    pivots += _run(rows, obj, basis, ncols, allowed, max_pivots)
    x = [Fraction(0)] * n
    for i in range(m):
        if basis[i] < n:
            x[basis[i]] = rows[i][-1]
    value = sum((c[j] * x[j] for j in range(n)), Fraction(0))
    return LPResult(value, x, obj[:n], pivots)


def highs_max(c, A_ub, b_ub, bounds=(0, None)) -> LPResult:
    """Float LP via HiGHS dual simplex (basic solution)."""
    from scipy.optimize import linprog

    c = np.asarray(c, dtype=float)
    if A_ub is not None and getattr(A_ub, "shape", (0, 0))[0] == 0:
        A_ub, b_ub = None, None
    res = linprog(-c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs-ds")
    if res.status == 2:
        raise LPError("LP is infeasible")
    if res.status == 3:
        raise LPError("LP is unbounded")
    if res.status != 0:
        raise LPError(f"HiGHS failed: {res.message}")
    return LPResult(float(-res.fun), list(res.x))


# --------------------------------------------------------------------------
# assignment LP over the demand/supply polytope


@dataclass
class AssignmentLP:
    """max u.x over (demand), (supply), x >= 0 restricted to ``variables``.

    ``variables`` are (student, bundle) pairs. Supply rows of groups in
    ``removed`` are dropped; ``fixed`` pins variable indices to 0 or 1.
    """

    variables: Sequence[tuple]
    objective: Sequence
    capacities: Mapping[str, object]
    removed: set = field(default_factory=set)
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.objective) != len(self.variables):
            raise ValueError("objective and variable dimensions differ")

    @property
    def dimension(self) -> int:
        return len(self.variables)

    def free_indices(self) -> list:
        """Free variables, excluding those forced to 0 by a student already fixed to 1."""
        full = {self.variables[k][0] for k, v in self.fixed.items() if v == 1}
        return [
            k for k in range(len(self.variables)) if k not in self.fixed and self.variables[k][0] not in full
        ]

    def rows(self, free: list):
        """Constraint rows over ``free``: (kind, key, column indices, rhs)."""
        fixed_use: dict = {}
        for k, v in self.fixed.items():
            if v == 1:
                for g in self.variables[k][1]:
                    fixed_use[g] = fixed_use.get(g, 0) + 1
        by_student: dict = {}
        by_group: dict = {}
        for col, k in enumerate(free):
            s, b = self.variables[k]
            by_student.setdefault(s, []).append(col)
            for g in b:
                if g not in self.removed:
                    by_group.setdefault(g, []).append(col)
        out = [("demand", s, cols, 1) for s, cols in by_student.items()]
        # bundles are frozensets, so fix the row order for hash-independent vertices
        for g, cols in sorted(by_group.items()):
            rhs = self.capacities[g] - fixed_use.get(g, 0)
            out.append(("supply", g, cols, rhs))
        return out


def solve_lp(lp: AssignmentLP, arithmetic: str = "exact") -> LPResult:
    """Optimal basic solution of an :class:`AssignmentLP`.

    Returns the full-dimension solution with fixed variables filled in and
    the objective value over all variables.
    """
    free = lp.free_indices()
    x_full = [0] * lp.dimension
    for k, v in lp.fixed.items():
        x_full[k] = v
    if free:
        rows = lp.rows(free)
        if arithmetic == "exact":
            c = [Fraction(lp.objective[k]) for k in free]
            A = []
            b = []
            for _, _, cols, rhs in rows:
                row = [0] * len(free)
                for col in cols:
                    row[col] = 1
                A.append(row)
                b.append(max(Fraction(rhs), Fraction(0)))
            res = simplex_max(c, A, b)
            sol = res.x
            rc = res.reduced_costs
        else:
            from scipy.sparse import csr_matrix

            data, ri, ci = [], [], []
            b = []
            for r, (_, _, cols, rhs) in enumerate(rows):
                for col in cols:
                    ri.append(r)
                    ci.append(col)
                    data.append(1.0)
                b.append(max(float(rhs), 0.0))
            A = csr_matrix((data, (ri, ci)), shape=(len(rows), len(free)))
            c = np.array([float(lp.objective[k]) for k in free])
            res = highs_max(c, A, np.array(b))
            sol = res.x
            rc = None
        for col, k in enumerate(free):
            x_full[k] = sol[col]
    else:
        rc = None
    zero = Fraction(0) if arithmetic == "exact" else 0.0
    value = sum((lp.objective[k] * x_full[k] for k in range(lp.dimension)), zero)
    return LPResult(value, x_full, rc)


# --------------------------------------------------------------------------
# minimum-norm point in a convex hull


def _affine_minimizer(G: np.ndarray) -> np.ndarray:
    """Weights mu (sum 1) minimising |sum mu_k p_k| given the Gram matrix of the p_k."""
    k = G.shape[0]
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = G
    K[:k, k] = 1.0
    K[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    try:
        sol = np.linalg.solve(K, rhs)
        if not np.all(np.isfinite(sol)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:k]


@dataclass
class ProjectionResult:
    y: np.ndarray
    weights: np.ndarray
    distance: float
    iterations: int


def min_norm_point(
    target,
    Z,
    tol: float = FLOAT_TOL,
    gram: Optional[np.ndarray] = None,
    init: Optional[np.ndarray] = None,
    max_iter: Optional[int] = None,
) -> ProjectionResult:
    """Euclidean projection of ``target`` onto conv(Z) with convex weights.

    Wolfe's algorithm on the points ``Z - target``. On return
    ``(target - y).(z - y) <= tol`` for every z in Z, the weights are
    non-negative, sum to one, and their support is affinely independent
    (hence at most d + 1 points). ``gram`` may pass a precomputed
    ``(Z - target)(Z - target)^T``; ``init`` warm-starts from weights whose
    support is affinely independent.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    t = np.asarray(target, dtype=float)
    k = Z.shape[0]
    if k == 0:
        raise ValueError("empty point set")
    if gram is None:
        P = Z - t
        gram = P @ P.T
    G = gram
    eps = 1e-12
    if init is not None and np.any(init > eps):
        S = [int(i) for i in np.flatnonzero(init > eps)]
        lam = np.asarray(init, dtype=float)[S]
        lam = lam / lam.sum()
    else:
        S = [int(np.argmin(np.diag(G)))]
        lam = np.array([1.0])
    max_iter = max_iter or (20 * k + 100)
    it = 0
    while it < max_iter:
        it += 1
        Gx = G[:, S] @ lam
        xx = float(lam @ Gx[S])
        j = int(np.argmin(Gx))
        if xx - Gx[j] <= tol or j in S:
            break
        S.append(j)
        lam = np.append(lam, 0.0)
        while True:
            mu = _affine_minimizer(G[np.ix_(S, S)])
            if np.all(mu > eps):
                lam = mu
                break
            neg = mu <= eps
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(neg, lam / (lam - mu), np.inf)
            theta = float(np.min(ratios))
            theta = min(max(theta, 0.0), 1.0)
            lam = lam + theta * (mu - lam)
            drop = lam <= eps
            if not drop.any():
                drop[int(np.argmin(np.where(neg, lam, np.inf)))] = True
            S = [s for s, d in zip(S, drop) if not d]
            lam = lam[~drop]
            lam = np.clip(lam, 0.0, None)
            lam = lam / lam.sum()
            if len(S) == 1:
                lam = np.array([1.0])
                break
    weights = np.zeros(k)
    weights[S] = lam
    y = weights @ Z
    return ProjectionResult(y, weights, float(np.linalg.norm(t - y)), it)
