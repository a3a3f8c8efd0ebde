"""Threshold clauses over degree-measure coordinates.

Grammar::

    predicate := "true" | "false" | clause ("&" clause)*
    clause    := "M(" k ")" (">=" | "<=") number

``M(k)`` is the degree marginal of the attachment measure at ``k``.  ``and``
and ``,`` are accepted as conjunctions.  The same clauses serve as linear
constraints for the rate minimisers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .measures import DegreeMeasure, PairMeasure

_CLAUSE = re.compile(r"^\s*[ML]\(\s*(\d+)\s*\)\s*(>=|<=)\s*([-+0-9.eE/]+)\s*$")


class PredicateSyntaxError(ValueError):
    pass


@dataclass(frozen=True)
class Clause:
    k: int
    op: str  # ">=" or "<="
    threshold: Fraction

    def holds(self, value) -> bool:
        return value >= self.threshold if self.op == ">=" else value <= self.threshold

    def __str__(self):
        return f"M({self.k}){self.op}{_num(self.threshold)}"


def _num(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else repr(float(x)) if _is_short(x) else str(x)


def _is_short(x: Fraction) -> bool:
    return Fraction(repr(float(x))) == x


@dataclass(frozen=True)
class Predicate:
    """Conjunction of clauses; ``constant`` fixes the value when there are none."""

    clauses: tuple[Clause, ...] = ()
    constant: bool = True

    @classmethod
    def parse(cls, text: str) -> "Predicate":
        s = text.strip()
        if s.lower() in ("true", ""):
            return cls((), True)
        if s.lower() == "false":
            return cls((), False)
        parts = re.split(r"\s*(?:&&?|\band\b|,)\s*", s)
        clauses = []
        for part in parts:
            m = _CLAUSE.match(part)
            if not m:
                raise PredicateSyntaxError(f"cannot parse clause {part!r}")
            try:
                thr = Fraction(m.group(3))
            except ValueError as exc:
                raise PredicateSyntaxError(f"bad number in {part!r}") from exc
            clauses.append(Clause(int(m.group(1)), m.group(2), thr))
        return cls(tuple(clauses))

    @classmethod
    def of(cls, *clauses: tuple[int, str, object]) -> "Predicate":
        return cls(tuple(Clause(k, op, Fraction(str(x)) if isinstance(x, float) else Fraction(x))
                         for k, op, x in clauses))

    def __str__(self):
        if not self.clauses:
            return "true" if self.constant else "false"
        return " & ".join(str(c) for c in self.clauses)

    def __call__(self, measure) -> bool:
        """Evaluate on a :class:`PairMeasure`, :class:`DegreeMeasure` or exact degree law."""
        if not self.clauses:
            return self.constant
        if isinstance(measure, PairMeasure):
            probs = measure.probs.sum(axis=1)
        elif isinstance(measure, DegreeMeasure):
            probs = measure.probs
        else:
            probs = measure
        return all(c.holds(probs[c.k] if c.k < len(probs) else 0) for c in self.clauses)

    def evaluate_counts(self, counts: np.ndarray, n: int) -> np.ndarray:
        """Vectorised exact test on ``(R, K+1[, P])`` attachment counts of trees with ``n`` vertices."""
        counts = np.asarray(counts)
        if counts.ndim == 3:
            counts = counts.sum(axis=2)
        R = counts.shape[0]
        if not self.clauses:
            return np.full(R, self.constant)
        ok = np.ones(R, dtype=bool)
        for c in self.clauses:
            col = counts[:, c.k] if c.k < counts.shape[1] else np.zeros(R, dtype=np.int64)
            lhs = col.astype(object) * c.threshold.denominator if n > 2 ** 40 else col * c.threshold.denominator
            rhs = c.threshold.numerator * (n - 1)
            ok &= (lhs >= rhs) if c.op == ">=" else (lhs <= rhs)
        return ok

    def linear_constraints(self, size: int):
        """``(A, b)`` with ``A @ ell >= b`` over ``size`` coordinates."""
        A = np.zeros((len(self.clauses), size))
        b = np.zeros(len(self.clauses))
        for i, c in enumerate(self.clauses):
            if c.k >= size:
                raise ValueError(f"clause {c} refers beyond the truncation")
            sign = 1.0 if c.op == ">=" else -1.0
            A[i, c.k] = sign
            b[i] = sign * float(c.threshold)
        return A, b


def as_predicate(event) -> Predicate:
    if isinstance(event, Predicate):
        return event
    if isinstance(event, str):
        return Predicate.parse(event)
    if isinstance(event, bool):
        return Predicate((), event)
    if isinstance(event, Sequence):
        return Predicate.of(*event)
    raise TypeError(f"cannot interpret {event!r} as a predicate")
