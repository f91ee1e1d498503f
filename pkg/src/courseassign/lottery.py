"""
Decomposition of a fractional assignment into a lottery over deterministic
matchings that respect demand exactly and over-allocate any group by at most
ell - 1 seats.

The outer loop keeps a set Z of integral matchings, projects the target onto
conv(Z), and asks iterative rounding for a new matching in the direction of
the residual. The inner iterative rounding solves the LP relaxation to a
vertex, freezes integral coordinates, and drops supply rows that cannot be
overrun by more than ell - 1 seats whatever the remaining variables do.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from .model import DeterministicMatching, FractionalAssignment, Instance, Lottery
from .numeric import INTEGRALITY_TOL, AssignmentLP, min_norm_point, solve_lp

log = logging.getLogger(__name__)


class RoundingError(RuntimeError):
    """No integral coordinate and no deletable supply row: the rounding cannot progress."""


@dataclass
class LotteryConfig:
    epsilon: float = 2.0
    delta: Union[float, str] = "auto"
    alpha: Optional[float] = None
    max_iterations: Optional[int] = None
    arithmetic: str = "float"
    strict_probe: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.alpha is not None and not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.delta != "auto" and not float(self.delta) > 0:
            raise ValueError("delta must be positive or 'auto'")
        if self.arithmetic not in ("exact", "float"):
            raise ValueError("arithmetic must be 'exact' or 'float'")


@dataclass
class RoundingResult:
    point: np.ndarray
    lp_value: object
    value: object
    rounds: int
    removed: set


def iterative_rounding_detail(
    instance: Instance,
    support: Sequence[tuple],
    u: Sequence,
    arithmetic: str = "float",
    capacities=None,
) -> RoundingResult:
    caps = dict(capacities) if capacities is not None else instance.capacities
    ell = instance.num_classes
    lp = AssignmentLP(list(support), list(u), caps)
    tol = 0 if arithmetic == "exact" else INTEGRALITY_TOL
    first = None
    rounds = 0
    while True:
        rounds += 1
        res = solve_lp(lp, arithmetic)
        if first is None:
            first = res.value
        x = res.x
        free = lp.free_indices()
        fixed_now = 0
        for k in free:
            if x[k] <= tol:
                lp.fixed[k] = 0
                fixed_now += 1
            elif x[k] >= 1 - tol:
                lp.fixed[k] = 1
                fixed_now += 1
        if fixed_now == len(free):
            break
        # every remaining variable is fractional, so its ceiling is 1
        rest = lp.free_indices()
        count: dict = {}
        for k in rest:
            for g in lp.variables[k][1]:
                count[g] = count.get(g, 0) + 1
        used: dict = {}
        for k, v in lp.fixed.items():
            if v == 1:
                for g in lp.variables[k][1]:
                    used[g] = used.get(g, 0) + 1
        deletable = {
            g
            for g, c in count.items()
            if g not in lp.removed and c <= caps[g] - used.get(g, 0) + ell - 1
        }
        if not deletable and not fixed_now:
            raise RoundingError("basic solution has no integral coordinate and no deletable supply row")
        lp.removed |= deletable
    point = np.zeros(lp.dimension, dtype=np.int8)
    for k, v in lp.fixed.items():
        point[k] = v
    zero = Fraction(0) if arithmetic == "exact" else 0.0
    value = sum((lp.objective[k] for k in np.flatnonzero(point)), zero)
    return RoundingResult(point, first, value, rounds, set(lp.removed))


def iterative_rounding(instance: Instance, support: Sequence[tuple], u: Sequence, arithmetic: str = "float") -> np.ndarray:
    """Integral point with ``u.x >= `` the LP optimum over (demand), (supply).

    Demand holds exactly; each group may be over-allocated by up to
    ``instance.num_classes - 1`` seats.
    """
    return iterative_rounding_detail(instance, support, u, arithmetic).point


@dataclass
class DeltaResult:
    delta: float
    alpha: float
    target: np.ndarray
    scaled: bool


def compute_delta(x_star: FractionalAssignment, epsilon: float = 2.0, alpha: Optional[float] = None) -> DeltaResult:
    """Radius of a ball around x* that stays inside the demand polytope.

    ``delta = min_i (1 - sum_b x_ib) / sqrt(m_i)`` over students with
    ``m_i`` support variables. When some demand row is tight, x* is first
    scaled by ``alpha`` (default ``1 - epsilon / (4 |x*|)``).
    """
    support = x_star.support()
    x = np.array([float(x_star.row(s)[b]) for s, b in support])
    students: dict = {}
    for k, (s, _) in enumerate(support):
        students.setdefault(s, []).append(k)
    if not students:
        return DeltaResult(math.inf, 1.0, x, False)

    def radius(vec):
        return min((1 - vec[idx].sum()) / math.sqrt(len(idx)) for idx in students.values())

    exact_slack = min(1 - x_star.mass(s) for s in students)
    if exact_slack > 0 and alpha is None:
        return DeltaResult(radius(x), 1.0, x, False)
    if alpha is None:
        alpha = 1 - epsilon / (4 * float(np.linalg.norm(x)))
        alpha = max(alpha, 0.5)
    target = alpha * x
    return DeltaResult(radius(target), float(alpha), target, alpha < 1)


@dataclass
class OverAllocationReport:
    """Expected number of groups over-allocated by exactly L seats, plus worst cases."""

    expected: dict
    worst_by_group: dict
    max_violation: int
    ell: int

    def to_dict(self) -> dict:
        return {
            "E": {str(k): v for k, v in self.expected.items()},
            "worstByGroup": dict(sorted(self.worst_by_group.items())),
            "maxViolation": self.max_violation,
            "bound": self.ell - 1,
        }


def overallocation_stats(lottery: Lottery, instance: Instance) -> OverAllocationReport:
    ell = instance.num_classes
    levels = {L: [] for L in range(1, max(ell, 2))}
    worst: dict = {}
    for m, lam in lottery.support:
        counts: dict = {}
        for g, v in m.violations(instance).items():
            counts[v] = counts.get(v, 0) + 1
            worst[g] = max(worst.get(g, 0), v)
        for L in set(levels) | set(counts):
            levels.setdefault(L, []).append(lam * counts.get(L, 0))
    exact = all(isinstance(lam, Fraction) for lam in lottery.weights)
    expected = {
        L: (sum(terms, Fraction(0)) if exact else math.fsum(terms)) for L, terms in sorted(levels.items())
    }
    return OverAllocationReport(expected, worst, max(worst.values(), default=0), ell)


@dataclass
class Decomposition:
    lottery: Lottery
    report: OverAllocationReport
    distance: float
    converged: bool
    iterations: int
    alpha: float
    delta: float
    effective_epsilon: float
    threshold_misses: int = 0
    history: list = field(default_factory=list)
    message: str = ""

    def __iter__(self):
        yield self.lottery
        yield self.report


def _to_matching(point, support, students) -> DeterministicMatching:
    assign = {s: None for s in students}
    for k in np.flatnonzero(point):
        s, b = support[k]
        assign[s] = b
    return DeterministicMatching(assign)


def decompose(instance: Instance, x_star: FractionalAssignment, cfg: Optional[LotteryConfig] = None) -> Decomposition:
    """Lottery whose expected assignment lies within ``cfg.epsilon`` of ``x_star``.

    Variables are the (student, bundle) pairs in the support of ``x_star``.
    Stops when the projection onto the current hull is close enough, when
    ``max_iterations`` is hit, or when rounding finds no improving matching.
    """
    cfg = cfg or LotteryConfig()
    support = x_star.support()
    students = x_star.students
    d = len(support)
    xs = np.array([float(x_star.row(s)[b]) for s, b in support])
    if d == 0:
        lot = Lottery(((DeterministicMatching({s: None for s in students}), 1.0),), cfg.epsilon)
        return Decomposition(lot, overallocation_stats(lot, instance), 0.0, True, 0, 1.0, math.inf, cfg.epsilon)

    dr = compute_delta(x_star, cfg.epsilon, cfg.alpha)
    target = dr.target
    eps = cfg.epsilon
    if dr.scaled:
        shift = float(np.linalg.norm(xs - target))
        eps = min(cfg.epsilon / 2, cfg.epsilon - shift)
        if eps <= 0:
            raise ValueError(f"alpha={dr.alpha} moves x* by {shift:.4g}, more than epsilon")
        log.info("demand rows tight; scaled x* by %.6f, error budget %.4g", dr.alpha, eps)
    delta = float(cfg.delta) if cfg.delta != "auto" else dr.delta
    max_iter = cfg.max_iterations or 10 * d
    arith = cfg.arithmetic

    def rounding(u):
        if arith == "exact":
            u = [Fraction(v) for v in u]
        return iterative_rounding_detail(instance, support, u, arith).point

    first_u = [x_star.row(s)[b] for s, b in support] if arith == "exact" else xs
    # rounding points are int8; work in float64 so dot products cannot overflow
    z0 = rounding(first_u).astype(np.float64)
    tz = [float(target @ z0)]
    tt = float(target @ target)
    Zm = z0[None, :]
    G = np.array([[float(z0 @ z0) - 2 * tz[0] + tt]])
    weights = np.array([1.0])
    history = []
    misses = 0
    converged = False
    message = ""
    it = 0
    while True:
        proj = min_norm_point(target, Zm, gram=G, init=weights)
        weights = proj.weights
        history.append(proj.distance)
        log.debug("iteration %d: distance %.6g with %d matchings", it, proj.distance, int(np.count_nonzero(weights)))
        if proj.distance < eps:
            converged = True
            break
        if it >= max_iter:
            message = f"iteration limit {max_iter} reached"
            break
        it += 1
        keep = weights > 0
        Zm, G, weights = Zm[keep], G[np.ix_(keep, keep)], weights[keep]
        tz = [v for v, k in zip(tz, keep) if k]
        y = proj.y
        u = target - y
        norm_u = float(np.linalg.norm(u))
        probe = target + delta * u / norm_u
        z_new = rounding(u)
        gain = float(u @ z_new)
        if gain < float(u @ probe) - 1e-9:
            misses += 1
            if cfg.strict_probe:
                message = "rounding missed the probe threshold"
                break
        if gain <= float(u @ y) + 1e-12:
            message = "rounding found no matching beyond the current hull"
            break
        zf = z_new.astype(np.float64)
        cross = Zm @ zf
        t_new = float(target @ zf)
        row = cross - np.array(tz) - t_new + tt
        diag = float(zf @ zf) - 2 * t_new + tt
        G = np.block([[G, row[:, None]], [row[None, :], np.array([[diag]])]])
        Zm = np.vstack([Zm, zf])
        tz.append(t_new)
        weights = np.append(weights, 0.0)

    keep = weights > 0
    lam = weights[keep]
    lam = lam / lam.sum()
    points = Zm[keep].astype(np.int8)
    lot = Lottery(
        tuple((_to_matching(p, support, students), float(w)) for p, w in zip(points, lam)),
        cfg.epsilon,
    )
    y = lam @ points
    dist = float(np.linalg.norm(xs - y))
    if not converged:
        log.warning("lottery decomposition stopped early: %s (distance %.4g)", message, dist)
    return Decomposition(
        lot,
        overallocation_stats(lot, instance),
        dist,
        converged,
        it,
        dr.alpha,
        delta,
        eps,
        misses,
        history,
        message,
    )


def expected_vector(lottery: Lottery, support: Sequence[tuple]) -> np.ndarray:
    index = {v: k for k, v in enumerate(support)}
    y = np.zeros(len(support))
    for m, lam in lottery.support:
        for s, b in m.assignment.items():
            if b is not None and (s, b) in index:
                y[index[(s, b)]] += float(lam)
    return y


def sample_indices(lottery: Lottery, n: int, seed: int) -> np.ndarray:
    """Indices of ``n`` support matchings drawn with probabilities lambda."""
    p = np.array([float(w) for w in lottery.weights])
    p = p / p.sum()
    return np.random.default_rng(seed).choice(len(p), size=n, p=p)


def draw(lottery: Lottery, seed: int) -> DeterministicMatching:
    """One deterministic matching sampled from the lottery."""
    return lottery.matchings[int(sample_indices(lottery, 1, seed)[0])]
