"""
Can a ranking be explained by course weights?
=============================================

An additive ranking passes the check; a ranking produced by the
schedule-based scores usually does not once a strict margin is required.
"""

import json
from pathlib import Path

from courseassign.rev import RevInstance, additive_ranking, solve_rev

weights = {"A": 0.9, "B": 0.4, "C": 0.2}
ranking = additive_ranking(weights, [{"A"}, {"B"}, {"C"}, {"A", "B"}, {"B", "C"}, {"A", "C"}])
print("additive:", [sorted(b) for b in ranking])
print("  err =", solve_rev(RevInstance(ranking, gamma=1e-3)).err)

doc = json.loads((Path(__file__).parents[1] / "tests" / "data" / "rev_elicited.json").read_text())
elicited = [frozenset(b) for b in doc["ranking"]]
for gamma in (0, 1e-3, 1e-2):
    res = solve_rev(RevInstance(elicited, gamma=gamma), "exact")
    print(f"elicited ranking, gamma {gamma:g}: err = {res.err} ({float(res.err):.4g})")
