"""
Scoring a week of tutorials
===========================

Compare a schedule that spreads three courses over three days with one that
packs them into a single day and leaves the other two free.
"""

from courseassign.elicitation import ElicitationParameters, score_bundle
from courseassign.model import WEEKDAYS, Instance, TimeSlot, TutorGroup

params = ElicitationParameters(classes=("A", "B", "C"), priorities={d: 5 for d in WEEKDAYS})


def week(slots):
    groups = tuple(TutorGroup(g, c, (TimeSlot(*t),), 5) for g, c, t in slots)
    return Instance(("A", "B", "C"), groups, (), ("me",))


spread = week([("a", "A", ("Mon", 600, 720)), ("b", "B", ("Tue", 600, 720)), ("c", "C", ("Wed", 600, 720))])
packed = week([("a", "A", ("Mon", 480, 600)), ("b", "B", ("Mon", 630, 750)), ("c", "C", ("Mon", 780, 900))])

# per-day contributions; a free day is worth 30 whatever its priority
for name, inst in (("spread", spread), ("packed", packed)):
    sb = score_bundle(inst, params, {"a", "b", "c"})
    days = {d: round(float(v), 2) for d, v in sb.per_day.items()}
    print(f"{name:7s} total {float(sb.score):7.2f}  {days}")
