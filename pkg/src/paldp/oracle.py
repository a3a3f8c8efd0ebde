"""Exact enumeration of every coloured attachment history of a small tree.

Base-dynamics probabilities are exact rationals: coefficients and colour
probabilities are read as decimals (``0.1`` is ``1/10``) and the colour law
is renormalised rationally.  Because all weights of one step share a
denominator, each branch probability is accumulated as an integer
numerator/denominator pair and reduced once per outcome.

Tilted probabilities involve ``exp(g)`` and are computed with mpmath at 60
significant digits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable

import mpmath
import numpy as np

from .empirics import exact_attachment_law, exact_degree_law
from .events import as_predicate
from .generator import EventLog
from .weights import WeightSpec

MAX_OUTCOMES = 1_000_000
MP_DIGITS = 60


class OracleLimitExceeded(ValueError):
    def __init__(self, n: int, q: int, limit: int):
        self.estimate = outcome_count(q, n)
        super().__init__(f"n={n} exceeds the enumeration limit {limit} for {q} colour(s): "
                         f"about {self.estimate:.3g} outcomes")


def outcome_count(q: int, n: int) -> int:
    """Upper bound ``q^n (n-1)!`` on the number of histories."""
    return q ** n * math.factorial(n - 1)


def n_limit(q: int) -> int:
    """Largest ``n`` whose outcome bound stays within ``MAX_OUTCOMES`` (10 for one colour, 7 for two)."""
    n = 2
    while outcome_count(q, n + 1) <= MAX_OUTCOMES:
        n += 1
    return n


def _rat(x) -> Fraction:
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    return Fraction(str(float(x)))


@dataclass(frozen=True)
class Outcome:
    """One history: vertex colours, parents (1-based) and parent in-degrees."""

    colors: tuple[int, ...]
    parents: tuple[int, ...]
    parent_indeg: tuple[int, ...]
    probability: object  # Fraction, or mpmath.mpf under a tilt

    def to_log(self, spec: WeightSpec) -> EventLog:
        return EventLog(len(self.colors), spec.colors, self.colors, self.parents, self.parent_indeg)

    def degree_law(self) -> tuple[Fraction, ...]:
        n = len(self.colors)
        counts = np.bincount(self.parent_indeg)
        return tuple(Fraction(int(c), n - 1) for c in counts)


def _check_n(spec: WeightSpec, n: int, limit: int | None):
    if n < 2:
        raise ValueError("n must be at least 2")
    q = len(spec.colors)
    lim = n_limit(q) if limit is None else limit
    if n > lim:
        raise OracleLimitExceeded(n, q, lim)


def _rational_tables(spec: WeightSpec, mu, n: int):
    """Integer weights ``F[b][a](k)`` scaled by a common denominator, and the colour law."""
    q = len(spec.colors)
    mu = [Fraction(1)] if mu is None and q == 1 else [_rat(x) for x in mu]
    tot = sum(mu)
    mu = [x / tot for x in mu]
    coeffs = [[(_rat(spec.gamma[b, p]), _rat(spec.beta[b, p])) for p in range(q * q)]
              for b in range(spec.n_buckets)]
    den = math.lcm(*[c.denominator for row in coeffs for pair in row for c in pair])
    F = [[(int(g * den), int(be * den)) for g, be in row] for row in coeffs]
    return mu, F


def iter_outcomes(spec: WeightSpec, mu=None, n: int = 2, tilt=None,
                  limit: int | None = None) -> Iterable[Outcome]:
    """Depth-first enumeration in lexicographic order of (colours, parents).

    Without ``tilt`` probabilities are :class:`~fractions.Fraction`; with a
    tilt they are the tilted-dynamics probabilities as 60-digit mpmath
    numbers.  Zero-probability branches are skipped.
    """
    _check_n(spec, n, limit)
    spec.require_valid()
    if tilt is None:
        return _iter_exact(spec, mu, n)
    return _iter_tilted(spec, mu, n, tilt)


def _walk_exact(spec, mu, n, visit):
    """Call ``visit(col, parents, recs, num, den)`` at every leaf (lists are reused)."""
    q = len(spec.colors)
    mu, F = _rational_tables(spec, mu, n)
    mu_num = [x.numerator for x in mu]
    mu_den = [x.denominator for x in mu]
    buckets = spec.step_buckets(n).tolist()
    col = [0] * n
    indeg = [0] * n
    parents = [0] * (n - 1)
    recs = [0] * (n - 1)

    def step(m, num, den):
        if m > n:
            visit(col, parents, recs, num, den)
            return
        table = F[buckets[m - 2]]
        for x in range(q):
            col[m - 1] = x
            w = [table[col[i] * q + x][0] * indeg[i] + table[col[i] * q + x][1] for i in range(m - 1)]
            S = sum(w)
            if S == 0:
                raise ValueError(f"all candidate parents have zero weight at step {m}")
            nx, dx = num * mu_num[x], den * mu_den[x] * S
            e = m - 2
            for i in range(m - 1):
                if w[i] == 0:
                    continue
                parents[e] = i + 1
                recs[e] = indeg[i]
                indeg[i] += 1
                step(m + 1, nx * w[i], dx)
                indeg[i] -= 1

    for x0 in range(q):
        col[0] = x0
        step(2, mu_num[x0], mu_den[x0])


def _iter_exact(spec, mu, n):
    out = []
    _walk_exact(spec, mu, n, lambda c, p, r, num, den: out.append(
        Outcome(tuple(c), tuple(p), tuple(r), Fraction(num, den))))
    return iter(out)


def _iter_tilted(spec, mu, n, tilt):
    q = len(spec.colors)
    mu_r, _ = _rational_tables(spec, mu, n)
    with mpmath.workdps(MP_DIGITS):
        mu_mp = [mpmath.mpf(x.numerator) / x.denominator for x in mu_r]
        eh = [mpmath.exp(mpmath.mpf(float(v))) for v in tilt.h]
        z = sum(m * e for m, e in zip(mu_mp, eh))
        law = [m * e / z for m, e in zip(mu_mp, eh)]
        kmax = n - 1
        tabs = []
        for b in range(spec.n_buckets):
            f = spec.f_table(b, kmax)
            d = tilt.log_ratio_table(spec, b, kmax)
            tabs.append([[_mp_rat(_rat(f[k, p])) * mpmath.exp(mpmath.mpf(float(d[k, p])))
                          for p in range(q * q)] for k in range(kmax + 1)])
        buckets = spec.step_buckets(n).tolist()
        col = [0] * n
        indeg = [0] * n
        parents = [0] * (n - 1)
        recs = [0] * (n - 1)
        out = []

        def step(m, prob):
            if m > n:
                out.append(Outcome(tuple(col), tuple(parents), tuple(recs), prob))
                return
            table = tabs[buckets[m - 2]]
            for x in range(q):
                col[m - 1] = x
                w = [table[indeg[i]][col[i] * q + x] for i in range(m - 1)]
                S = mpmath.fsum(w)
                if S == 0:
                    raise ValueError(f"all candidate parents have zero tilted weight at step {m}")
                for i in range(m - 1):
                    if w[i] == 0:
                        continue
                    parents[m - 2] = i + 1
                    recs[m - 2] = indeg[i]
                    indeg[i] += 1
                    step(m + 1, prob * law[x] * w[i] / S)
                    indeg[i] -= 1

        for x0 in range(q):
            col[0] = x0
            step(2, law[x0])
    return iter(out)


def _mp_rat(x: Fraction):
    return mpmath.mpf(x.numerator) / x.denominator


def enumerate_histories(spec: WeightSpec, mu=None, n: int = 2, tilt=None,
                        limit: int | None = None) -> list[tuple[EventLog, object]]:
    """Every history as ``(EventLog, probability)`` in lexicographic order."""
    return [(o.to_log(spec), o.probability) for o in iter_outcomes(spec, mu, n, tilt, limit)]


def exact_law(spec: WeightSpec, mu=None, n: int = 2, statistic: str | Callable = "degree",
              limit: int | None = None) -> dict:
    """Push the outcome law through ``statistic``.

    ``"degree"`` maps a history to the exact degree marginal of its
    attachment measure, ``"attachment"`` to the full attachment measure;
    a callable receives the :class:`EventLog`.
    """
    law: dict = {}
    for o in iter_outcomes(spec, mu, n, None, limit):
        if statistic == "degree":
            key = o.degree_law()
        elif statistic == "attachment":
            key = exact_attachment_law(o.to_log(spec))
        else:
            key = statistic(o.to_log(spec))
        law[key] = law.get(key, Fraction(0)) + o.probability
    return law


def exact_event_probability(predicate, spec: WeightSpec, mu=None, n: int = 2,
                            limit: int | None = None) -> Fraction:
    """Exact probability that the attachment measure satisfies ``predicate``."""
    pred = as_predicate(predicate)
    _check_n(spec, n, limit)
    spec.require_valid()
    # leaves sharing a denominator are summed as integers first
    by_den: dict[int, int] = {}
    cache: dict[tuple, bool] = {}

    def visit(col, parents, recs, num, den):
        key = tuple(sorted(recs))
        ok = cache.get(key)
        if ok is None:
            counts = np.bincount(recs)
            ok = cache[key] = pred(tuple(Fraction(int(c), n - 1) for c in counts))
        if ok:
            by_den[den] = by_den.get(den, 0) + num

    _walk_exact(spec, mu, n, visit)
    return sum((Fraction(v, d) for d, v in by_den.items()), Fraction(0))


def outcome_table(spec: WeightSpec, mu=None, n: int = 2, limit: int | None = None) -> str:
    """CSV of all outcomes: id, colour word, event sequence ``m>parent@indeg`` and exact probability."""
    rows = ["outcome,vertex_colors,events,numerator,denominator"]
    for i, o in enumerate(iter_outcomes(spec, mu, n, None, limit)):
        word = "".join(spec.colors[c] if len(spec.colors[c]) == 1 else f"[{spec.colors[c]}]"
                       for c in o.colors)
        events = " ".join(f"{m}>{p}@{d}" for m, p, d in zip(range(2, n + 1), o.parents, o.parent_indeg))
        rows.append(f"{i},{word},{events},{o.probability.numerator},{o.probability.denominator}")
    return "\n".join(rows) + "\n"


__all__ = ["Outcome", "OracleLimitExceeded", "n_limit", "outcome_count", "iter_outcomes",
           "enumerate_histories", "exact_law", "exact_event_probability", "outcome_table",
           "exact_degree_law"]
