"""Exact laws of small trees, and how fast a rare event decays.

Enumerates every history of a four-vertex tree in exact rational
arithmetic, then follows -log P(M(0) >= 0.99) / n up to n = 10, where the
event means "no vertex ever attaches to a parent that already has a child",
i.e. the tree is a path.  The optimiser's lower value of
the rate for the same constraint is printed next to it for orientation;
desk-scale n is far from the asymptotic regime.

Run:  python demos/02_exact_small_trees.py
"""

from paldp.optimize import minimize_rate_I
from paldp.oracle import exact_law, outcome_table
from paldp.rare_events import decay_rate_scan
from paldp.weights import WeightSpec

spec = WeightSpec.plain(1.0, 1.0)

print("All histories of a 4-vertex tree (event m>parent@indegree):")
print(outcome_table(spec, n=4))

print("Law of the attachment degree marginal at n = 4:")
for key, p in sorted(exact_law(spec, n=4).items(), key=lambda kv: -kv[1]):
    print(f"  {' '.join(map(str, key)):>15}  {p}")

event = "M(0)>=0.99"
opt = minimize_rate_I(event, 1.0, 1.0, kmax=10, seed=0)
print(f"\n{event}: optimiser value of I over the constraint set = {opt.value:.4f}")
print(f"{'n':>3} {'exact probability':>20} {'-log p / n':>11}")
for row in decay_rate_scan(event, list(range(3, 11)), spec):
    print(f"{row['n']:>3} {row['exact']:>20} {row['rate']:11.5f}")
