"""Degrees of a large preferential attachment tree settle on a limit law.

Grows one plain tree (f(k) = k + 1) with a million vertices, then compares
the empirical in-degree distribution and the attachment measure with the
limit law and with its tail law.  The attachment measure records the
in-degree of each parent *at the moment it was chosen*, so its limit is the
tail law k -> pi(k+1) + pi(k+2) + ..., not the limit law itself.

Run:  python demos/01_limit_law.py
"""

import numpy as np

from paldp.empirics import attachment_measure
from paldp.generator import generate
from paldp.measures import DegreeMeasure, degree_marginal, tv_distance
from paldp.rates import pi_f
from paldp.weights import WeightSpec

spec = WeightSpec.plain(1.0, 1.0)
n = 1_000_000
log = generate(spec, None, n, seed=2024)

K = 12
pi = pi_f(spec, kmax=K)
hat = np.append(np.cumsum(pi.probs[::-1])[::-1][1:], 0.0) + pi.tail_mass
tail_law = DegreeMeasure(hat, 1.0 - hat.sum())

# final in-degree of every vertex, counted from the parent list
indeg = np.bincount(np.asarray(log.parents) - 1, minlength=n)
freq = np.bincount(indeg) / n
degrees = DegreeMeasure(freq[:K + 1], max(0.0, 1.0 - freq[:K + 1].sum()))
attach = degree_marginal(attachment_measure(log)).with_kmax(K)

print(f"n = {n}, f(k) = k + 1")
print(f"{'k':>3} {'degree freq':>12} {'pi_f':>10} {'attach freq':>12} {'tail law':>10}")
for k in range(8):
    print(f"{k:>3} {degrees.probs[k]:12.5f} {pi.probs[k]:10.5f} {attach.probs[k]:12.5f} {tail_law.probs[k]:10.5f}")
print(f"TV(degrees, pi_f)          = {tv_distance(degrees, pi):.4f}")
print(f"TV(attachment, pi_f)       = {tv_distance(attach, pi):.4f}")
print(f"TV(attachment, tail law)   = {tv_distance(attach, tail_law):.4f}")
