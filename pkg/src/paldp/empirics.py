"""Empirical measures of an attachment history."""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .generator import EventLog
from .measures import DegreeMeasure, PairMeasure, PathMeasure


def attachment_counts(log: EventLog) -> np.ndarray:
    """``(K+1, P)`` integer counts of (parent in-degree, colour pair) over events."""
    q = len(log.colors)
    kmax = int(log.parent_indeg.max())
    counts = np.zeros((kmax + 1, q * q), dtype=np.int64)
    np.add.at(counts, (log.parent_indeg, log.pair_indices), 1)
    return counts


def attachment_measure(log: EventLog) -> PairMeasure:
    """``M_X``: uniform weight ``1/(n-1)`` on each event's (degree, colour pair).

    For a one-colour log its degree marginal is the empirical degree measure.
    """
    return PairMeasure(attachment_counts(log) / (log.n - 1), log.colors)


def degree_measure(log: EventLog) -> DegreeMeasure:
    """Degree marginal of :func:`attachment_measure`."""
    counts = attachment_counts(log).sum(axis=1)
    return DegreeMeasure(counts / (log.n - 1))


def exact_degree_law(log: EventLog) -> tuple[Fraction, ...]:
    """Degree marginal of ``M_X`` as exact fractions (hashable)."""
    counts = np.bincount(log.parent_indeg)
    return tuple(Fraction(int(c), log.n - 1) for c in counts)


def exact_attachment_law(log: EventLog) -> tuple:
    """``M_X`` as a sorted tuple of ``((k, x1, x2), Fraction)`` atoms (hashable)."""
    counts = attachment_counts(log)
    pairs = [(x1, x2) for x1 in log.colors for x2 in log.colors]
    atoms = [((k, *pairs[p]), Fraction(int(counts[k, p]), log.n - 1))
             for k, p in zip(*np.nonzero(counts))]
    return tuple(sorted(atoms))


def snapshot_step(t: float, n: int) -> int:
    """Arrival index ``m = ceil(t n)`` (guarded against float noise)."""
    return int(math.ceil(t * n - 1e-9))


def snapshot_path(log: EventLog, grid) -> PathMeasure:
    """Per-colour-class in-degree histograms just before arrival ``m = ceil(t n)``.

    At grid time ``t`` the state is replayed up to (not including) the edge of
    vertex ``m``; among vertices ``1..m-1`` the in-degree histogram of colour
    class ``x1`` becomes the conditional for every pair ``(x1, x2)``.  Pair
    weights are the class shares of ``x1`` with ``x2`` fixed to the colour of
    the arriving vertex ``m`` (uniform over ``x2`` at ``m = n+1``, never
    reached for ``t <= 1``).  Classes with no vertex yet are marked undefined.
    """
    grid = np.asarray(grid, dtype=float)
    n = log.n
    q = len(log.colors)
    steps = [snapshot_step(t, n) for t in grid]
    if any(m < 2 for m in steps) or grid[-1] != 1.0:
        raise ValueError(f"grid must lie in [2/n, 1] = [{2 / n}, 1] and end at 1")
    kmax = int(log.final_indegrees().max())
    G, P = grid.size, q * q
    probs = np.zeros((G, kmax + 1, P))
    weights = np.zeros((G, P))
    defined = np.zeros((G, P), dtype=bool)
    for i, m in enumerate(steps):
        # in-degrees of vertices 1..m-1 from the edges of vertices 2..m-1
        indeg = np.bincount(log.parents[: m - 2] - 1, minlength=m - 1)[: m - 1]
        vcol = log.vertex_colors[: m - 1]
        x2 = int(log.vertex_colors[m - 1])
        for x1 in range(q):
            members = indeg[vcol == x1]
            if members.size == 0:
                continue
            hist = np.bincount(members, minlength=kmax + 1) / members.size
            for y in range(q):
                p = x1 * q + y
                probs[i, :, p] = hist
                defined[i, p] = True
            weights[i, x1 * q + x2] = members.size / (m - 1)
    return PathMeasure(grid, probs, np.zeros((G, P)), weights, log.colors, defined)


def uniform_grid(n: int, G: int) -> np.ndarray:
    """``G`` snapshot times ``m/n`` spread uniformly over ``[2/n, 1]``, ending at 1."""
    steps = np.unique(np.round(np.linspace(2, n, G)).astype(int))
    return steps / n
