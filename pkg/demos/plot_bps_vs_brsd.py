"""
Bundled eating versus random serial dictatorship
================================================

Six students, two classes. BPS is envy-free by construction; the exact
BRSD lottery over all 720 student orders is not.
"""

import json
from pathlib import Path

from courseassign.mechanisms import enumerate_brsd_exact, run_bps
from courseassign.metrics import envy_counts, popularity, sd_prefer_counts, summary
from courseassign.model import load_instance, load_profile

doc = json.loads((Path(__file__).parents[1] / "tests" / "data" / "regression_brsd_envy.json").read_text())
inst = load_instance(json.dumps(doc["instance"]))
prof = load_profile(json.dumps(doc["profiles"]))

bps, trace = run_bps(inst, prof)
brsd = enumerate_brsd_exact(inst, prof)

# the eating clock stops whenever a group fills up
for ev in trace.events:
    if ev.exhausted:
        print(f"t = {ev.time}: {', '.join(ev.exhausted)} exhausted")

for name, x in (("BPS", bps), ("BRSD", brsd)):
    rep = summary(x, prof, ks=(1, 3))
    print(f"{name:5s} envy (strong, weak) = {envy_counts(x, prof)}, expected rank {float(rep.expected_rank):.3f}, "
          f"AUPCR {float(rep.aupcr):.3f}")

a, b, rest = sd_prefer_counts(bps, brsd, prof)
print(f"students preferring BPS | BRSD: ({a}|{b}), {rest} incomparable or equal")
print(f"popularity of BPS over BRSD: {float(popularity(bps, brsd, prof)):+.4f}")
