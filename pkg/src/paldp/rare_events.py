"""Exponential tilts, exact likelihood ratios and rare-event estimators.

A tilt ``(h, g)`` changes the colour law to ``mu~ = exp(h - U(h)) mu`` with
``U(h) = log sum_a e^{h(a)} mu(a)`` and the attachment weight to
``f~ = (c/f) exp(g)``.  Internally the weight change is stored as the
log-ratio ``delta = log(f~/f) = g - (2 log f - log c)``, so the identity
tilt ``g = 2 log f - log c`` has ``delta`` exactly zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .events import Predicate, as_predicate
from .generator import CorruptedLog, EventLog, generate_tilted, simulate_attachment_counts
from .measures import DegreeMeasure, PairMeasure, PathMeasure, conditional, pair_marginal
from .weights import WeightSpec, check_color_law

MAX_EXCLUDED_FRACTION = 1e-3
TARGET_FLOOR = 1e-300  # smallest target mass used inside a logarithm


class TooManyExcluded(RuntimeError):
    """More than 0.1% of replicas produced non-finite weights."""


class SupportViolation(ValueError):
    def __init__(self, cells):
        self.cells = cells
        super().__init__("target charges cells the baseline does not: "
                         + ", ".join(f"(k={k}, pair={a})" for k, a in cells))


def _log_f(f: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(f)


def canonical_identity(spec: WeightSpec, bucket: int, kmax: int) -> np.ndarray:
    """``2 log f - log c`` on ``0..kmax``: the ``g`` that leaves the dynamics unchanged."""
    return 2.0 * _log_f(spec.f_table(bucket, kmax)) - math.log(spec.c[bucket])


@dataclass(frozen=True, eq=False)
class Tilt:
    """Tilt tables.

    Parameters
    ----------
    h : (|X|,) array
        Colour tilt.
    g : (B, K_g+1, P) array
        Weight tilt per time bucket, degree and colour pair.
    g_default : float or None
        Value of ``g`` beyond ``K_g``.  ``None`` leaves the weight untilted
        there (``f~ = f``).
    """

    h: np.ndarray
    g: np.ndarray
    g_default: float | None = 0.0
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        h = np.array(self.h, dtype=float).ravel()
        g = np.array(self.g, dtype=float)
        if g.ndim != 3 or g.shape[1] == 0:
            raise ValueError("g must have shape (buckets, K_g + 1, pairs)")
        if g.shape[2] != h.size ** 2:
            raise ValueError(f"g has {g.shape[2]} pairs but h has {h.size} colours")
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(g))):
            raise ValueError("tilt entries must be finite")
        if self.g_default is not None and not math.isfinite(self.g_default):
            raise ValueError("g_default must be finite")
        h.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "g", g)

    @property
    def kg(self) -> int:
        return self.g.shape[1] - 1

    @classmethod
    def identity(cls, spec: WeightSpec, kg: int = 64) -> "Tilt":
        """The canonical tilt that reproduces the base dynamics exactly."""
        g = np.stack([canonical_identity(spec, b, kg) for b in range(spec.n_buckets)])
        if not np.all(np.isfinite(g)):
            raise ValueError("identity tilt is undefined where f = 0")
        return cls(np.zeros(len(spec.colors)), g, None)

    @classmethod
    def uniform(cls, spec: WeightSpec, value: float = 0.0, kg: int = 0, h=None) -> "Tilt":
        """Constant ``g``, e.g. ``g = 0`` gives ``f~ = c/f``."""
        q = len(spec.colors)
        g = np.full((spec.n_buckets, kg + 1, q * q), float(value))
        return cls(np.zeros(q) if h is None else h, g, float(value))

    def U(self, mu) -> float:
        """``log sum_a e^{h(a)} mu(a)``."""
        mu = np.asarray(mu, dtype=float)
        hmax = self.h.max()
        return float(hmax + math.log(float(mu @ np.exp(self.h - hmax))))

    def color_log_ratio(self, mu) -> np.ndarray:
        """``log(mu~/mu) = h - U(h)``, exactly zero for constant ``h``."""
        mu = np.asarray(mu, dtype=float)
        s = self.h - self.h.max()
        return s - math.log(float(mu @ np.exp(s)) / float(mu.sum()))

    def tilted_color_law(self, mu) -> np.ndarray:
        mu = np.asarray(mu, dtype=float)
        law = mu * np.exp(self.color_log_ratio(mu))
        return law / law.sum()

    def g_table(self, spec: WeightSpec, bucket: int, kmax: int) -> np.ndarray:
        """``g`` on ``0..kmax`` for one bucket (``g_default`` beyond ``K_g``)."""
        self._check(spec)
        out = np.empty((kmax + 1, spec.n_pairs))
        m = min(kmax, self.kg) + 1
        out[:m] = self.g[bucket, :m]
        if kmax > self.kg:
            out[m:] = (canonical_identity(spec, bucket, kmax)[m:] if self.g_default is None
                       else self.g_default)
        return out

    def log_ratio_table(self, spec: WeightSpec, bucket: int, kmax: int) -> np.ndarray:
        """``delta(k, a) = log(f~/f)`` on ``0..kmax``; zero where ``f = 0``."""
        key = (id(spec), bucket, kmax)
        hit = self._cache.get(key)
        if hit is not None and hit[0] is spec:
            return hit[1]
        ident = canonical_identity(spec, bucket, kmax)
        delta = self.g_table(spec, bucket, kmax) - np.where(np.isfinite(ident), ident, 0.0)
        if self.g_default is None and kmax > self.kg:
            delta[self.kg + 1:] = 0.0
        delta[~np.isfinite(ident)] = 0.0
        delta.setflags(write=False)
        self._cache[key] = (spec, delta)
        return delta

    def tilted_weights(self, spec: WeightSpec, bucket: int, kmax: int) -> np.ndarray:
        """``f~ = f exp(delta)`` on ``0..kmax``."""
        return spec.f_table(bucket, kmax) * np.exp(self.log_ratio_table(spec, bucket, kmax))

    def _check(self, spec: WeightSpec):
        if self.g.shape[0] != spec.n_buckets or self.g.shape[2] != spec.n_pairs:
            raise ValueError(f"tilt shape {self.g.shape} does not fit the weight spec "
                             f"({spec.n_buckets} buckets, {spec.n_pairs} pairs)")

    def is_identity(self, spec: WeightSpec, kmax: int = 64) -> bool:
        return (np.all(self.h == self.h[0])
                and all(np.all(self.log_ratio_table(spec, b, kmax) == 0) for b in range(spec.n_buckets)))


def log_likelihood_ratio(log: EventLog, tilt: Tilt, spec: WeightSpec, mu=None) -> float:
    """``log dP~/dP`` at the realised history, by exact replay of the product form.

    Sum over vertices of ``log(mu~/mu)`` at their colours, plus over events of
    ``delta`` at the parent's (degree, pair), minus over steps of the log
    ratio of tilted to base normalisers (summed over per-class degree
    histograms).
    """
    return _replay_llr(log, tilt, spec, mu, exact=True)


def empirical_form_llr(log: EventLog, tilt: Tilt, spec: WeightSpec, mu=None) -> float:
    """The same ratio written through empirical measures, exact only as ``n -> inf``.

    Identical to :func:`log_likelihood_ratio` except that the base normaliser
    at step ``m`` is replaced by ``c (m - 1)``, i.e. the tilted normaliser is
    read as ``(m - 1) sum_{k,x} L_m(k, x) f e^delta / c`` with ``L_m`` the
    empirical (degree, colour) law of the ``m - 1`` existing vertices.  With
    colour-independent weights the two differ by ``O(log n)``; colour-dependent
    weights add the per-class imbalance of in-degree against vertex count,
    so the gap per edge shrinks roughly like ``n^{-1/2}``.  A diagnostic only,
    never used for estimation.
    """
    return _replay_llr(log, tilt, spec, mu, exact=False)


def _replay_llr(log: EventLog, tilt: Tilt, spec: WeightSpec, mu, exact: bool) -> float:
    mu = check_color_law(np.ones(1) if mu is None and len(spec.colors) == 1 else mu, spec.colors)
    if tuple(log.colors) != tuple(spec.colors):
        raise CorruptedLog("log colours do not match the weight spec")
    log.check()
    n, q = log.n, len(spec.colors)
    kmax = int(log.parent_indeg.max()) + 1
    buckets = spec.step_buckets(n)
    f_tabs = [spec.f_table(b, kmax) for b in range(spec.n_buckets)]
    d_tabs = [tilt.log_ratio_table(spec, b, kmax) for b in range(spec.n_buckets)]
    ft_tabs = [f * np.exp(d) for f, d in zip(f_tabs, d_tabs)]
    vc = log.vertex_colors
    total = float(tilt.color_log_ratio(mu)[vc].sum())
    hist = np.zeros((q, kmax + 1))
    hist[vc[0], 0] = 1.0
    indeg = np.zeros(n + 1, dtype=np.int64)
    for e in range(n - 1):
        m = e + 2
        x = int(vc[m - 1])
        b = int(buckets[e])
        parent = int(log.parents[e])
        k = int(indeg[parent])
        if k != log.parent_indeg[e]:
            raise CorruptedLog(f"event m={m}: recorded in-degree {log.parent_indeg[e]} != replay {k}")
        y = int(vc[parent - 1])
        cols = np.arange(q) * q + x
        base = float(np.sum(hist * f_tabs[b][:, cols].T)) if exact else spec.c[b] * (m - 1)
        tilted = float(np.sum(hist * ft_tabs[b][:, cols].T))
        total += float(d_tabs[b][k, y * q + x]) - (math.log(tilted) - math.log(base))
        hist[y, k] -= 1
        hist[y, k + 1] += 1
        hist[x, 0] += 1
        indeg[parent] += 1
    return total


def empirical_form_gap(spec: WeightSpec, mu, tilt: Tilt, n_list, reps: int = 20, seed=None) -> list[dict]:
    """Mean and max of ``|exact - empirical form| / (n - 1)`` over tilted logs, per ``n``."""
    rows = []
    for n in n_list:
        gaps = np.array([abs(llr - empirical_form_llr(lg, tilt, spec, mu)) / (n - 1)
                         for lg, llr in sample_tilted_logs(spec, mu, tilt, n, reps, seed)])
        rows.append({"n": int(n), "mean_gap": float(gaps.mean()), "max_gap": float(gaps.max())})
    return rows


# estimators ------------------------------------------------------------------

@dataclass(frozen=True)
class Estimate:
    """Monte Carlo estimate of an event probability.

    ``stderr`` is the population standard deviation of the per-replica
    values over ``sqrt(reps)``; ``ess`` is ``(sum w)^2 / sum w^2`` over the
    likelihood weights (``reps`` for the naive estimator).
    """

    p_hat: float
    stderr: float
    reps: int
    hits: int
    ess: float
    excluded: int = 0
    mean_weight: float = 1.0
    mean_weight_stderr: float = 0.0

    def to_dict(self) -> dict:
        return {"p_hat": self.p_hat, "stderr": self.stderr, "ess": self.ess, "reps": self.reps,
                "excluded": self.excluded, "hits": self.hits, "mean_weight": self.mean_weight,
                "mean_weight_stderr": self.mean_weight_stderr}


def _mean_stderr(values: np.ndarray) -> tuple[float, float]:
    return float(values.mean()), float(values.std() / math.sqrt(values.size))


def _estimate(hits: np.ndarray, weights: np.ndarray) -> Estimate:
    ok = np.isfinite(weights)
    excluded = int((~ok).sum())
    if excluded > MAX_EXCLUDED_FRACTION * weights.size:
        raise TooManyExcluded(f"{excluded} of {weights.size} replicas have non-finite weights")
    hits, weights = hits[ok], weights[ok]
    values = np.where(hits, weights, 0.0)
    p_hat, se = _mean_stderr(values)
    mw, mw_se = _mean_stderr(weights)
    s2 = float(np.sum(weights ** 2))
    ess = float(weights.sum() ** 2 / s2) if s2 > 0 else 0.0
    return Estimate(p_hat, se, int(weights.size), int(hits.sum()), ess, excluded, mw, mw_se)


def naive_estimate(event, spec: WeightSpec, mu, n: int, reps: int, seed=None) -> Estimate:
    """Plain Monte Carlo frequency of ``event`` over ``reps`` base-dynamics trees."""
    counts, _ = simulate_attachment_counts(spec, mu, n, reps, seed)
    hits = as_predicate(event).evaluate_counts(counts, n)
    return _estimate(hits, np.ones(reps))


def is_estimate(event, spec: WeightSpec, mu, tilt: Tilt, n: int, reps: int, seed=None) -> Estimate:
    """Importance-sampling estimate: mean of ``1{event} exp(-LLR)`` over tilted trees."""
    if reps < 2:
        raise ValueError("reps must be at least 2")
    counts, llr = simulate_attachment_counts(spec, mu, n, reps, seed, tilt=tilt)
    hits = as_predicate(event).evaluate_counts(counts, n)
    with np.errstate(over="ignore"):
        weights = np.exp(-llr)
    return _estimate(hits, weights)


# tilt construction -------------------------------------------------------------

def _target_conditionals(target, spec: WeightSpec):
    if isinstance(target, DegreeMeasure):
        if spec.n_pairs != 1:
            raise ValueError("a degree-measure target needs a one-colour spec; pass a PairMeasure")
        target = PairMeasure.from_degree_measure(target, spec.colors)
    w = pair_marginal(target)
    return target, w, {p: conditional(target, p) for p in np.flatnonzero(w > 0)}


def _baseline_conditional(baseline, spec, bucket, p, kmax):
    from .rates import pi_f
    if baseline is None:
        return pi_f(spec, p, kmax).probs
    if isinstance(baseline, DegreeMeasure):
        probs = baseline.probs
    elif isinstance(baseline, PathMeasure):
        t = spec.boundaries[bucket]
        i = int(np.searchsorted(baseline.grid, t - 1e-12))
        probs = baseline.probs[min(i, baseline.grid.size - 1), :, p]
    elif isinstance(baseline, PairMeasure):
        probs = conditional(baseline, p).probs
    else:
        probs = np.asarray(baseline[p], dtype=float)
    out = np.zeros(kmax + 1)
    m = min(kmax + 1, probs.size)
    out[:m] = probs[:m]
    return out


def suggest_tilt(target, spec: WeightSpec, mu=None, baseline=None, g_default: float = 0.0) -> Tilt:
    """Tilt that steers the dynamics toward ``target``.

    ``g(k, a) = log(f(k,a) omega(k|a) / (c nu(k|a)))`` where ``nu(k|a) > 0``
    and 0 elsewhere, with ``K_g`` the target's truncation; ``h`` is the log
    ratio of the target's child-colour marginal to ``mu``.  ``baseline``
    defaults to the limit law ``pi_f`` of each pair (time-constant specs
    only); a :class:`PathMeasure` supplies one conditional per bucket.
    Target atoms of zero mass are floored at ``1e-300`` to keep ``g`` finite.
    """
    target, w, conds = _target_conditionals(target, spec)
    kmax = target.kmax
    q = len(spec.colors)
    g = np.zeros((spec.n_buckets, kmax + 1, spec.n_pairs))
    bad = []
    for b in range(spec.n_buckets):
        f = spec.f_table(b, kmax)
        c = float(spec.c[b])
        for p, cond in conds.items():
            nu = _baseline_conditional(baseline, spec, b, p, kmax)
            om = cond.probs
            for k in np.flatnonzero((om > 0) & (nu <= 0)):
                bad.append((int(k), spec.pairs[p]))
            ok = nu > 0
            g[b, ok, p] = (np.log(f[ok, p]) + np.log(np.maximum(om[ok], TARGET_FLOOR))
                           - math.log(c) - np.log(nu[ok]))
    if bad:
        raise SupportViolation(sorted(set(bad)))
    if q == 1:
        h = np.zeros(1)
    else:
        mu = check_color_law(mu, spec.colors)
        target21 = w.reshape(q, q).sum(axis=0)
        h = np.where((target21 > 0) & (mu > 0),
                     np.log(np.maximum(target21, TARGET_FLOOR)) - np.log(np.where(mu > 0, mu, 1.0)),
                     math.log(TARGET_FLOOR))
    return Tilt(h, g, g_default)


def decay_rate_scan(event, n_list, spec: WeightSpec, mu=None, reps: int = 10000, seed=None,
                    oracle_limit: int | None = None, tilt_for=None, predicted=None) -> list[dict]:
    """Rows ``{n, p_hat, stderr, rate = -log(p_hat)/n, method, predicted}``.

    Exact oracle probabilities are used up to the oracle's size limit, then
    importance sampling when ``tilt_for(n)`` returns a tilt, else naive
    Monte Carlo.  ``predicted`` (e.g. an optimised rate infimum) is copied
    into every row for side-by-side reporting.
    """
    from . import oracle
    pred = as_predicate(event)
    mu_arr = check_color_law(np.ones(1) if mu is None and len(spec.colors) == 1 else mu, spec.colors)
    rows = []
    for i, n in enumerate(n_list):
        if n < 2:
            raise ValueError("every n must be at least 2")
        limit = oracle.n_limit(len(spec.colors)) if oracle_limit is None else oracle_limit
        if n <= limit:
            p = oracle.exact_event_probability(pred, spec, mu_arr, n)
            p_hat, se, method, exact = float(p), 0.0, "oracle", p
        else:
            tilt = tilt_for(n) if tilt_for is not None else None
            sub = None if seed is None else (seed, i)
            est = (is_estimate(pred, spec, mu_arr, tilt, n, reps, sub) if tilt is not None
                   else naive_estimate(pred, spec, mu_arr, n, reps, sub))
            p_hat, se, method, exact = est.p_hat, est.stderr, "is" if tilt is not None else "naive", None
        rate = -math.log(p_hat) / n if p_hat > 0 else math.inf
        if p_hat == 1:
            rate = 0.0
        rows.append({"n": n, "p_hat": p_hat, "stderr": se, "rate": rate, "method": method,
                     "exact": None if exact is None else f"{exact.numerator}/{exact.denominator}",
                     "predicted": predicted})
    return rows


def sample_tilted_logs(spec: WeightSpec, mu, tilt: Tilt, n: int, reps: int, seed=None):
    """Tilted histories with their LLRs (replica ``r`` uses stream ``(seed, r)``)."""
    out = []
    for r in range(reps):
        log = generate_tilted(spec, mu, tilt, n, seed, replica=r)
        out.append((log, log_likelihood_ratio(log, tilt, spec, mu)))
    return out


__all__ = ["Tilt", "Estimate", "SupportViolation", "TooManyExcluded", "canonical_identity",
           "log_likelihood_ratio", "empirical_form_llr", "empirical_form_gap", "naive_estimate", "is_estimate", "suggest_tilt",
           "decay_rate_scan", "sample_tilted_logs", "Predicate"]
