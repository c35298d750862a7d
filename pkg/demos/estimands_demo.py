"""Which estimand does the usual IV ratio recover?

Builds a small population of compliance types, prints the estimands, then
lets the random generator hunt for a population where monotonicity fails.
Run: python demos/estimands_demo.py
"""

import random
from fractions import Fraction as F

from mrkit.estimands import (
    EstimandKind,
    check_assumptions,
    compute_estimand,
    enumerate_compliance,
    find_counterexample,
    usual_iv_estimand,
)
from mrkit.types import CausalPopulation, Unit

pop = CausalPopulation((
    Unit.make(F(1, 2), d=(0, 1), y=(0, 2)),  # compliers, effect 2
    Unit.make(F(1, 4), d=(1, 1), y=(1, 4)),  # always-takers, effect 3
    Unit.make(F(1, 4), d=(0, 0), y=(0, 5)),  # never-takers, effect 5
))

print("compliance masses:", {k: str(v) for k, v in enumerate_compliance(pop).items()})
print("usual IV estimand:", usual_iv_estimand(pop))
for kind in (EstimandKind.LATE, EstimandKind.ATE, EstimandKind.ATT):
    print(f"{kind.value:>4}:", compute_estimand(pop, kind))
print("assumptions:", check_assumptions(pop).to_dict())

bad = find_counterexample(EstimandKind.LATE, random.Random(0))
print("\nwith defiers present:")
print("  usual IV =", usual_iv_estimand(bad), " LATE =", compute_estimand(bad, "LATE"))
