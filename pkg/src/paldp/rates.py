"""Limit degree law and relative-entropy rate functions.

All rate functions are evaluated on the truncated coordinates ``0..K_max``.
Each result also carries ``tail_bound``, an estimate of what the omitted
degrees would contribute: the conditional tail mass times the magnitude of
the log-ratio at ``K_max`` (exactly 0 at the limit law, where that log-ratio
vanishes identically).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .measures import (DegreeMeasure, PairMeasure, PathMeasure, StructureError,
                       UndefinedConditional, child_color_marginal, conditional,
                       degree_marginal, entropy_terms, pair_marginal, tail)
from .weights import WeightSpec, check_color_law

PATH_MATCH_TOL = 1e-9
G_FLOOR = -50.0  # tilt value used where the target has no mass


@dataclass(frozen=True)
class RateResult:
    """Value of a rate function with its truncation diagnostics."""

    value: float
    tail_bound: float = 0.0
    terms: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    def __float__(self):
        return float(self.value)

    def to_dict(self) -> dict:
        return {"value": _json_float(self.value), "tail_bound": _json_float(self.tail_bound),
                "terms": [_json_float(t) for t in np.ravel(self.terms)]}


def _json_float(x):
    x = float(x)
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")


def _require_time_constant(spec: WeightSpec, what: str):
    if not spec.time_constant:
        raise ValueError(f"{what} needs time-constant weights (got {spec.n_buckets} buckets)")


def pi_f(spec: WeightSpec, pair=0, kmax: int = 100) -> DegreeMeasure:
    """Limit degree law ``pi(k) = c/(c+f(k)) prod_{i<k} f(i)/(c+f(i))``.

    The tail mass is the running product at ``kmax + 1``, so atoms plus tail
    telescope to one.
    """
    _require_time_constant(spec, "pi_f")
    p = spec.pair_index(pair)
    f = spec.f_table(0, kmax)[:, p]
    c = float(spec.c[0])
    ratio = f / (c + f)
    run = np.concatenate(([1.0], np.cumprod(ratio)))
    probs = run[:-1] * (c / (c + f))
    return DegreeMeasure(probs, float(run[-1]))


def _conditional_entropy(p: np.ndarray, p_tail: float, ref: np.ndarray) -> RateResult:
    """Truncated ``sum_k p(k) log(p(k)/ref(k))`` with a tail estimate."""
    terms = entropy_terms(p, ref)
    value = float(terms.sum())
    K = p.size - 1
    if p_tail == 0:
        bound = 0.0
    elif p[K] > 0 and 0 < ref[K] < np.inf:
        bound = p_tail * abs(math.log(p[K]) - math.log(ref[K]))
    else:
        bound = math.inf
    return RateResult(value, bound, terms)


def _rho(ell: DegreeMeasure, f: np.ndarray, c: float) -> np.ndarray:
    """Reference ``(c/f(k)) * ell_hat(k)``; infinite weight where ``f = 0 < ell_hat``."""
    hat = tail(ell)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(f > 0, c / np.where(f > 0, f, 1.0) * hat, np.where(hat > 0, np.inf, 0.0))
    return rho


def reference_I(ell: DegreeMeasure, gamma: float = 1.0, beta: float = 1.0) -> np.ndarray:
    """The (unnormalised) reference ``rho`` of :func:`rate_I`."""
    f = gamma * np.arange(ell.kmax + 1) + beta
    return _rho(ell, f, gamma + beta)


def rate_I(ell: DegreeMeasure, gamma: float = 1.0, beta: float = 1.0) -> RateResult:
    """``I(ell) = H(ell || (c/f) ell_hat)`` for the plain model.

    Not bounded below by zero: only by ``-log sum(rho)`` (see
    :func:`paldp.measures.jensen_floor`).
    """
    return _conditional_entropy(ell.probs, ell.tail_mass, reference_I(ell, gamma, beta))


def _color_term(omega: PairMeasure, mu) -> float:
    mu = check_color_law(mu, omega.colors)
    return float(entropy_terms(child_color_marginal(omega), mu).sum())


def rate_J(omega: PairMeasure, mu, spec: WeightSpec) -> RateResult:
    """``J(omega) = H(omega_{2,1} || mu) + sum_a omega_2(a) H(omega(.|a) || (c/f) omega_hat(.|a))``.

    Pairs without mass contribute nothing.  ``terms`` holds the colour term
    followed by the per-pair contributions.
    """
    _require_time_constant(spec, "rate_J")
    _check_colors(omega, spec)
    c = float(spec.c[0])
    f = spec.f_table(0, omega.kmax)
    if len(omega.colors) == 1:
        ell = degree_marginal(omega)
        r = _conditional_entropy(ell.probs, ell.tail_mass, _rho(ell, f[:, 0], c))
        return RateResult(r.value, r.tail_bound, np.array([0.0, r.value]))
    color = _color_term(omega, mu)
    weights = pair_marginal(omega)
    parts = np.zeros(omega.probs.shape[1])
    bound = 0.0
    for p, w in enumerate(weights):
        if w <= 0:
            continue
        cond = conditional(omega, p)
        r = _conditional_entropy(cond.probs, cond.tail_mass, _rho(cond, f[:, p], c))
        parts[p] = w * r.value
        bound += w * r.tail_bound
    return RateResult(color + float(parts.sum()), bound, np.concatenate(([color], parts)))


def _check_colors(omega, spec):
    if tuple(omega.colors) != tuple(spec.colors):
        raise StructureError(f"colour alphabets differ: {omega.colors} vs {spec.colors}")


def _path_buckets(nu: PathMeasure, spec: WeightSpec) -> np.ndarray:
    """Bucket of each grid interval; every bucket boundary must be a grid point."""
    for b in spec.boundaries:
        if not np.any(np.isclose(nu.grid, b, rtol=0, atol=1e-12)):
            raise ValueError(f"path grid does not contain the bucket boundary {b!r}")
    return np.array([spec.bucket(t) for t in nu.grid])


def _aligned(omega: PairMeasure, nu: PathMeasure):
    """Common truncation of ``omega`` and the path snapshots."""
    K = max(omega.kmax, nu.kmax)
    om = omega.probs
    if omega.kmax < K:
        om = np.vstack([om, np.zeros((K - omega.kmax, om.shape[1]))])
    npr = nu.probs
    if nu.kmax < K:
        npr = np.concatenate([npr, np.zeros((npr.shape[0], K - nu.kmax, npr.shape[2]))], axis=1)
    return K, om, npr


def _omega_conditionals(omega: PairMeasure, om: np.ndarray):
    w = pair_marginal(omega)
    conds = np.zeros_like(om)
    tails = np.zeros(w.size)
    for p in np.flatnonzero(w > 0):
        conds[:, p] = om[:, p] / w[p]
        tails[p] = omega.tails[p] / w[p]
    return w, conds, tails


def rate_K(omega: PairMeasure, nu: PathMeasure, mu, spec: WeightSpec) -> RateResult:
    """``K_nu(omega) = H(omega_{2,1}||mu) + sum_a omega_2(a) int H(omega(.|a) || (c_t/f_t) nu_t(.|a)) dt``.

    The time integral is a finite sum: the path is constant on each grid
    interval.  A pair with mass whose path conditional is undefined on a
    set of positive length gives ``+inf``.
    """
    _check_colors(omega, spec)
    if tuple(nu.colors) != tuple(omega.colors):
        raise StructureError("path and measure use different colour alphabets")
    buckets = _path_buckets(nu, spec)
    K, om, npr = _aligned(omega, nu)
    w, conds, ctails = _omega_conditionals(omega, om)
    dt = nu.interval_weights()
    color = _color_term(omega, mu)
    parts = np.zeros(w.size)
    bound = 0.0
    for p in np.flatnonzero(w > 0):
        acc = 0.0
        for i, b in enumerate(buckets):
            if dt[i] == 0:
                continue
            if not nu.defined[i, p]:
                acc = math.inf
                break
            f = spec.f_table(b, K)[:, p]
            with np.errstate(divide="ignore"):
                ref = float(spec.c[b]) / f * npr[i, :, p]
            r = _conditional_entropy(conds[:, p], ctails[p], ref)
            acc += dt[i] * r.value
            bound += w[p] * dt[i] * r.tail_bound
        parts[p] = w[p] * acc
    return RateResult(color + float(parts.sum()), bound, np.concatenate(([color], parts)))


def rate_J_tilde(omega: PairMeasure, nu: PathMeasure, mu, spec: WeightSpec,
                 path_match_tol: float = PATH_MATCH_TOL) -> RateResult:
    """Pair-path rate: :func:`rate_K` when the path ends at ``omega``, else ``+inf``.

    "Ends at" compares, for each pair carrying mass, the conditional of
    ``omega`` with the final snapshot of ``nu`` in total variation.
    """
    _path_buckets(nu, spec)
    K, om, npr = _aligned(omega, nu)
    w, conds, ctails = _omega_conditionals(omega, om)
    for p in np.flatnonzero(w > 0):
        if not nu.defined[-1, p]:
            return RateResult(math.inf, 0.0)
        diff = 0.5 * (np.abs(conds[:, p] - npr[-1, :, p]).sum() + abs(ctails[p] - nu.tails[-1, p]))
        if diff > path_match_tol:
            return RateResult(math.inf, 0.0)
    return rate_K(omega, nu, mu, spec)


# variational form ------------------------------------------------------------

@dataclass(frozen=True)
class VariationalResult:
    """Best objective value found and the tilt tables achieving it."""

    value: float
    h: np.ndarray
    g: np.ndarray  # (G, K+1, P): one table per grid interval
    sweeps: int
    converged: bool

    def __float__(self):
        return float(self.value)


def _variational_parts(omega, nu, mu, spec):
    _check_colors(omega, spec)
    buckets = _path_buckets(nu, spec)
    K, om, npr = _aligned(omega, nu)
    w, conds, _ = _omega_conditionals(omega, om)
    mu = check_color_law(mu, omega.colors)
    f = np.stack([spec.f_table(b, K) for b in buckets])  # (G, K+1, P)
    c = np.array([spec.c[b] for b in buckets])
    return K, om, npr, w, conds, mu, f, c, nu.interval_weights()


def variational_objective(omega: PairMeasure, nu: PathMeasure, mu, spec: WeightSpec,
                          h=None, g=None) -> float:
    """Bracketed objective of the variational rate at tables ``(h, g)``.

    ``<h, omega_{2,1}> - log <e^h, mu> + int [<g_t - 2 log f_t + log c_t, omega>
    - sum_a omega_2(a) log <e^{g_t(.,a)} / f_t(.,a), nu_t(.|a)>] dt``, with
    ``g`` of shape ``(G, K+1, P)`` (one table per grid interval) and sums
    over the truncated coordinates.
    """
    K, om, npr, w, conds, mu, f, c, dt = _variational_parts(omega, nu, mu, spec)
    q = len(omega.colors)
    h = np.zeros(q) if h is None else np.asarray(h, float)
    g = np.zeros(f.shape) if g is None else np.broadcast_to(np.asarray(g, float), f.shape)
    return _objective(h, g, om, npr, w, child_color_marginal(omega), mu, f, c, dt)


def _objective(h, g, om, npr, w, omega21, mu, f, c, dt):
    hmax = h.max()
    val = float(omega21 @ h) - (hmax + math.log(float(mu @ np.exp(h - hmax))))
    logf = np.log(f)
    mass = om.sum()
    for i in range(dt.size):
        if dt[i] == 0:
            continue
        lin = float(np.sum(om * (g[i] - 2.0 * logf[i]))) + mass * math.log(c[i])
        logs = 0.0
        for p in np.flatnonzero(w > 0):
            inner = float(np.sum(np.exp(g[i, :, p]) / f[i, :, p] * npr[i, :, p]))
            logs += w[p] * (math.log(inner) if inner > 0 else -math.inf)
        val += dt[i] * (lin - logs)
    return val


def _dv_update(x: np.ndarray, p: np.ndarray, wts: np.ndarray) -> None:
    """One sweep of exact coordinate maximisation of ``<x, p> - log <e^x, wts>`` (in place)."""
    for k in range(x.size):
        if wts[k] <= 0:
            continue
        if p[k] <= 0:
            x[k] = G_FLOOR
            continue
        e = wts * np.exp(x)
        rest = float(e.sum() - e[k])
        if p[k] >= 1.0 or rest <= 0:
            continue
        x[k] = math.log(p[k] * rest / (wts[k] * (1.0 - p[k])))


def variational_K_hat(omega: PairMeasure, nu: PathMeasure, mu, spec: WeightSpec,
                      max_sweeps: int = 500, tol: float = 1e-12) -> VariationalResult:
    """Lower estimate of the variational rate by coordinate ascent from zero tilts.

    Each coordinate update is the exact one-dimensional maximiser, so the
    objective never decreases.  Returns ``+inf`` when ``omega`` charges a
    degree the path does not (the supremum is then unbounded).
    """
    if max_sweeps < 1:
        raise ValueError("iteration budget must allow at least one ascent sweep")
    if np.any(omega.tails > 0):
        raise ValueError("the truncated objective is unbounded when omega has tail mass")
    K, om, npr, w, conds, mu, f, c, dt = _variational_parts(omega, nu, mu, spec)
    omega21 = child_color_marginal(omega)
    h = np.zeros(len(omega.colors))
    g = np.zeros(f.shape)
    active = np.flatnonzero(w > 0)
    for i in range(dt.size):
        if dt[i] == 0:
            continue
        for p in active:
            if np.any((conds[:, p] > 0) & (npr[i, :, p] <= 0)):
                return VariationalResult(math.inf, h, g, 0, True)
    if np.any((omega21 > 0) & (mu <= 0)):
        return VariationalResult(math.inf, h, g, 0, True)
    best = _objective(h, g, om, npr, w, omega21, mu, f, c, dt)
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        _dv_update(h, omega21, mu)
        for i in range(dt.size):
            for p in active:
                _dv_update(g[i, :, p], conds[:, p], npr[i, :, p] / f[i, :, p])
        val = _objective(h, g, om, npr, w, omega21, mu, f, c, dt)
        gain = val - best
        best = max(best, val)
        if gain <= tol:
            converged = True
            break
    return VariationalResult(best, h, g, sweeps, converged)


def analytic_tilt(omega: PairMeasure, nu: PathMeasure, spec: WeightSpec) -> np.ndarray:
    """``g_t(k, a) = log(f_t(k,a) omega(k|a) / (c_t nu_t(k|a)))`` per grid interval (0 where undefined)."""
    buckets = _path_buckets(nu, spec)
    K, om, npr = _aligned(omega, nu)
    _, conds, _ = _omega_conditionals(omega, om)
    g = np.zeros((nu.grid.size, K + 1, om.shape[1]))
    for i, b in enumerate(buckets):
        f = spec.f_table(b, K)
        ok = (npr[i] > 0) & (conds > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.log(f * conds / (spec.c[b] * npr[i]))
        g[i] = np.where(ok, val, np.where(npr[i] > 0, G_FLOOR, 0.0))
    return g


def pi_f_pair_measure(spec: WeightSpec, mu, kmax: int, pair_weights=None) -> PairMeasure:
    """``omega(k, a) = omega_2(a) pi_f(k|a)``.

    The default pair weights ``mu(x1) mu(x2)`` give child-colour marginal
    ``mu``.
    """
    mu = check_color_law(mu, spec.colors)
    w = np.outer(mu, mu).ravel() if pair_weights is None else np.asarray(pair_weights, float)
    conds = [pi_f(spec, p, kmax) for p in range(spec.n_pairs)]
    return PairMeasure.from_conditionals(w, conds, spec.colors)


__all__ = ["RateResult", "VariationalResult", "pi_f", "pi_f_pair_measure", "rate_I", "reference_I",
           "rate_J", "rate_K", "rate_J_tilde", "variational_objective", "variational_K_hat",
           "analytic_tilt", "UndefinedConditional"]
