"""
From a fractional assignment to a lottery
=========================================

Generate a small term, run BPS, and write the result as a lottery over
matchings that may over-fill a group by at most ell - 1 seats.
"""

import numpy as np

from courseassign.elicitation import build_profile
from courseassign.generator import GeneratorConfig, generate
from courseassign.lottery import LotteryConfig, decompose, draw, expected_vector
from courseassign.mechanisms import run_bps

inst, params = generate(GeneratorConfig(students=50, classes=4, groups_per_class=5, capacity=3, seed=1))
prof = build_profile(inst, params)
x, _ = run_bps(inst, prof)
support = x.support()
print(f"{len(inst.students)} students, {len(support)} (student, bundle) pairs with positive probability")

dec = decompose(inst, x, LotteryConfig(epsilon=2.0))
xs = np.array([float(x.row(s)[b]) for s, b in support])
y = expected_vector(dec.lottery, support)
print(f"{len(dec.lottery.support)} matchings after {dec.iterations} iterations, |x - E[z]| = {np.linalg.norm(xs - y):.3f}")

# expected number of groups over-filled by exactly L seats
for L, v in dec.report.expected.items():
    print(f"  E_{L} = {float(v):.3f}")

m = draw(dec.lottery, seed=2024)
print(f"one draw matches {m.size} students; over-filled groups: {m.violations(inst) or 'none'}")
