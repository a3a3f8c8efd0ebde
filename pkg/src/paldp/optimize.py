"""Constrained minimisation of the degree and pair rate functions.

Measures are optimised over ``0..K_max`` plus an explicit tail coordinate:
the rate is finite only when every truncated atom has mass above it, so a
measure supported on ``0..K_max`` alone is never feasible.  The objective is
the truncated sum of :mod:`paldp.rates`.

Both problems are smooth on the interior of a product of simplices and are
solved with SLSQP from several starts; the best feasible point ever
evaluated is returned, so the reported value never exceeds any feasible
value seen.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, minimize

from .events import Predicate, as_predicate
from .measures import DegreeMeasure, PairMeasure
from .rates import pi_f, rate_I, rate_J
from .weights import WeightSpec, check_color_law

FLOOR = 1e-15  # lower bound on every coordinate inside the optimiser
FEAS_TOL = 1e-10


class Infeasible(ValueError):
    """The constraint set has no point in the truncated simplex."""

    def __init__(self, constraints, slack: float):
        self.slack = slack
        super().__init__(f"constraints {constraints} are infeasible (best slack {slack:.3g})")


@dataclass(frozen=True)
class OptimizationResult:
    """Best measure found, its rate and solver diagnostics."""

    measure: DegreeMeasure
    value: float
    residual: float
    start_values: tuple[float, ...]
    evaluations: int
    extra: dict = field(default_factory=dict)

    def __iter__(self):  # allows ``ell, value = minimize_rate_I(...)``
        return iter((self.measure, self.value))

    @property
    def dispersion(self) -> float:
        vals = [v for v in self.start_values if math.isfinite(v)]
        return max(vals) - min(vals) if vals else math.inf


# degree rate -----------------------------------------------------------------

def _objective_I(x, logf_c):
    """Truncated rate and gradient at ``x = (ell_0..ell_K, tail)``."""
    ell, tau = x[:-1], x[-1]
    hat = np.cumsum(x[::-1])[::-1][1:]  # tau + sum_{j>k} ell_j
    log_ell = np.log(ell)
    log_hat = np.log(hat)
    val = float(np.sum(ell * (log_ell + logf_c - log_hat)))
    r = ell / hat
    grad = np.empty_like(x)
    grad[:-1] = log_ell + 1.0 + logf_c - log_hat - np.concatenate(([0.0], np.cumsum(r)[:-1]))
    grad[-1] = -float(r.sum())
    return val, grad


def _feasibility(A, b, size):
    """Maximise the common slack ``s`` in ``A x >= b + s`` over the simplex."""
    if A.shape[0] == 0:
        return math.inf
    c = np.zeros(size + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-A, np.ones((A.shape[0], 1))])
    A_eq = np.zeros((1, size + 1))
    A_eq[0, :size] = 1.0
    res = linprog(c, A_ub=A_ub, b_ub=-b, A_eq=A_eq, b_eq=[1.0],
                  bounds=[(0, None)] * size + [(None, 1.0)], method="highs")
    return float(res.x[-1]) if res.status == 0 else -math.inf


class _Tracker:
    """Keeps the best feasible point seen across all objective calls."""

    def __init__(self, fun, A, b):
        self.fun, self.A, self.b = fun, A, b
        self.best_val, self.best_x, self.calls = math.inf, None, 0

    def __call__(self, x):
        self.calls += 1
        val, grad = self.fun(x)
        if (math.isfinite(val) and val < self.best_val and np.all(x >= 0)
                and abs(x.sum() - 1.0) <= FEAS_TOL
                and np.all(self.A @ x >= self.b - FEAS_TOL)):
            self.best_val, self.best_x = val, x.copy()
        return val, grad


def _starts(center: np.ndarray, n_starts: int, rng: np.random.Generator):
    yield center
    for _ in range(n_starts - 1):
        yield rng.dirichlet(np.ones(center.size))


def _solve(tracker, x0s, A, b, size, ftol):
    cons = [{"type": "eq", "fun": lambda x: np.sum(x) - 1.0, "jac": lambda x: np.ones_like(x)}]
    if A.shape[0]:
        cons.append({"type": "ineq", "fun": lambda x: A @ x - b, "jac": lambda x: A})
    values = []
    for x0 in x0s:
        x0 = np.clip(x0, 1e-6, None)
        x0 = x0 / x0.sum()
        with warnings.catch_warnings():
            # SLSQP clips its line-search steps to the bounds; that is expected here
            warnings.simplefilter("ignore", RuntimeWarning)
            res = minimize(tracker, x0, jac=True, method="SLSQP", bounds=[(FLOOR, 1.0)] * size,
                           constraints=cons, options={"ftol": ftol, "maxiter": 2000})
        x = res.x
        ok = abs(x.sum() - 1.0) <= 1e-8 and np.all(A @ x >= b - 1e-8)
        values.append(float(res.fun) if ok else math.inf)
    return values


def _kkt_residual(x, grad, A, b):
    """Stationarity residual on the free coordinates (interior, no active clause)."""
    fixed = np.zeros(x.size, dtype=bool)
    for row, rhs in zip(A, b):
        if abs(row @ x - rhs) <= 1e-7:
            fixed |= row != 0
    free = (x > 1e-9) & ~fixed
    if not np.any(free):
        return 0.0
    lam = float(np.mean(grad[free]))
    res = float(np.max(np.abs(grad[free] - lam)))
    low = (~free) & ~fixed
    if np.any(low):
        res = max(res, float(np.max(np.maximum(lam - grad[low], 0.0))))
    return res


def minimize_rate_I(constraints=(), gamma: float = 1.0, beta: float = 1.0, kmax: int = 20,
                    tol: float = 1e-6, n_starts: int = 8, seed=0, ftol: float = 1e-15) -> OptimizationResult:
    """Minimise the truncated degree rate subject to threshold clauses.

    Parameters
    ----------
    constraints : predicate, clause string or sequence of ``(k, op, x)``
        Linear thresholds on ``ell``.
    kmax : int
        Truncation; the tail mass is an additional free coordinate.
    n_starts : int
        The limit law plus ``n_starts - 1`` flat-Dirichlet starts.

    The returned value is signed: the truncated rate can be negative.
    """
    pred = as_predicate(constraints)
    if not pred.constant:
        raise Infeasible(str(pred), -math.inf)
    size = kmax + 2
    A, b = pred.linear_constraints(size)
    slack = _feasibility(A, b, size)
    if slack < -FEAS_TOL:
        raise Infeasible(str(pred), slack)
    f = gamma * np.arange(kmax + 1) + beta
    logf_c = np.log(f / (gamma + beta))
    tracker = _Tracker(lambda x: _objective_I(x, logf_c), A, b)
    pi = pi_f(WeightSpec.plain(gamma, beta), 0, kmax)
    rng = np.random.default_rng(seed)
    values = _solve(tracker, _starts(pi.coordinates(), n_starts, rng), A, b, size, ftol)
    if tracker.best_x is None:
        raise Infeasible(str(pred), slack)
    x = tracker.best_x
    _, grad = _objective_I(x, logf_c)
    ell = DegreeMeasure(x[:-1] / x.sum(), x[-1] / x.sum())
    return OptimizationResult(ell, tracker.best_val, _kkt_residual(x, grad, A, b), tuple(values),
                              tracker.calls, {"slack": slack})


def grid_search_rate_I(constraints=(), gamma: float = 1.0, beta: float = 1.0, kmax: int = 3,
                       steps: int = 40, levels: int = 6) -> tuple[np.ndarray, float]:
    """Brute-force minimum over lattice points of the ``(K_max+2)``-coordinate simplex.

    The first level is a uniform lattice of spacing ``1/steps``; each later
    level repeats the search on a lattice half as wide centred at the best
    point so far.
    """
    if kmax > 4:
        raise ValueError("grid search is only practical for kmax <= 4")
    pred = as_predicate(constraints)
    size = kmax + 2
    A, b = pred.linear_constraints(size)
    f = gamma * np.arange(kmax + 1) + beta
    logf_c = np.log(f / (gamma + beta))

    def evaluate(pts):
        pts = pts[(np.all(pts > 0, axis=1)) & np.all(pts @ A.T >= b - 1e-12, axis=1)]
        if pts.size == 0:
            return None, math.inf
        ell = pts[:, :-1]
        hat = np.cumsum(pts[:, ::-1], axis=1)[:, ::-1][:, 1:]
        vals = np.sum(ell * (np.log(ell) + logf_c - np.log(hat)), axis=1)
        i = int(np.argmin(vals))
        return pts[i], float(vals[i])

    best_x, best = evaluate(_lattice(size, steps) / steps)
    width = 1.0 / steps
    for _ in range(levels):
        if best_x is None:
            break
        offsets = np.array(np.meshgrid(*[np.linspace(-width, width, 9)] * (size - 1))).reshape(size - 1, -1).T
        pts = best_x[None, :-1] + offsets
        pts = np.hstack([pts, 1.0 - pts.sum(axis=1, keepdims=True)])
        x, val = evaluate(pts)
        if val < best:
            best_x, best = x, val
        width /= 2
    return best_x, best


def _lattice(size: int, steps: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``size`` summing to ``steps``."""
    if size == 1:
        return np.array([[steps]])
    parts = [np.hstack([np.full((len(rest), 1), i), rest])
             for i in range(steps + 1) for rest in [_lattice(size - 1, steps - i)]]
    return np.vstack(parts)


# pair rate under a degree-marginal constraint ---------------------------------

def _objective_J(x, K, P, q, logf_c, log_mu):
    """Homogeneous pair rate and gradient; ``x`` is ``(K+2, P)`` flattened (last row = tails)."""
    W = x.reshape(K + 2, P)
    om = W[:-1]
    hat = np.cumsum(W[::-1], axis=0)[::-1][1:]
    log_om = np.log(om)
    log_hat = np.log(hat)
    val = float(np.sum(om * (log_om + logf_c - log_hat)))
    r = om / hat
    grad = np.empty_like(W)
    grad[:-1] = log_om + 1.0 + logf_c - log_hat - np.vstack([np.zeros((1, P)), np.cumsum(r, axis=0)[:-1]])
    grad[-1] = -r.sum(axis=0)
    w21 = W.sum(axis=0).reshape(q, q).sum(axis=0)
    lr = np.log(w21) - log_mu
    val += float(np.sum(w21 * lr))
    grad += np.tile(lr + 1.0, q)[None, :]
    return val, grad.ravel()


def _collapsed(spec: WeightSpec) -> tuple[float, float]:
    g, b = spec.gamma[0], spec.beta[0]
    if not (np.all(g == g[0]) and np.all(b == b[0])):
        raise ValueError("the plain rate needs colour-independent weights to collapse onto")
    return float(g[0]), float(b[0])


@dataclass(frozen=True)
class ContractionResult:
    J_min: float
    I_value: float
    gap: float
    omega: PairMeasure
    start_values: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {"J_min": self.J_min, "I_value": self.I_value, "gap": self.gap,
                "start_values": list(self.start_values)}


def contraction_check(ell: DegreeMeasure, mu, spec: WeightSpec, kmax: int | None = None,
                      n_starts: int = 6, seed=0, ftol: float = 1e-15) -> ContractionResult:
    """Minimise the pair rate over pair measures with degree marginal ``ell``.

    ``I_value`` is the plain rate of ``ell`` for the (colour-independent)
    coefficients of ``spec``; ``gap = J_min - I_value``.  With one colour
    the only feasible pair measure is ``ell`` itself and the gap is 0.
    """
    if not spec.time_constant:
        raise ValueError("contraction_check needs time-constant weights")
    if kmax is not None:
        ell = ell.with_kmax(kmax)
    K = ell.kmax
    gamma, beta = _collapsed(spec)
    I_value = float(rate_I(ell, gamma, beta))
    q = len(spec.colors)
    if q == 1:
        omega = PairMeasure.from_degree_measure(ell, spec.colors)
        J = float(rate_J(omega, [1.0], spec))
        return ContractionResult(J, I_value, J - I_value, omega, (J,))
    mu = check_color_law(mu, spec.colors)
    P = q * q
    f = spec.f_table(0, K)
    logf_c = np.log(f / spec.c[0])
    marg = ell.coordinates()
    A = np.zeros((K + 2, (K + 2) * P))
    for k in range(K + 2):
        A[k, k * P:(k + 1) * P] = 1.0
    cons = [{"type": "eq", "fun": lambda x: A @ x - marg, "jac": lambda x: A}]
    tracker_best = [math.inf, None]

    def fun(x):
        val, grad = _objective_J(x, K, P, q, logf_c, np.log(mu))
        if val < tracker_best[0] and np.all(np.abs(A @ x - marg) <= FEAS_TOL):
            tracker_best[0], tracker_best[1] = val, x.copy()
        return val, grad

    rng = np.random.default_rng(seed)
    product = np.outer(marg, np.outer(mu, mu).ravel())
    starts = [product] + [marg[:, None] * rng.dirichlet(np.ones(P), size=K + 2) for _ in range(n_starts - 1)]
    values = []
    for x0 in starts:
        x0 = np.maximum(x0, FLOOR)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = minimize(fun, x0.ravel(), jac=True, method="SLSQP",
                           bounds=[(FLOOR, 1.0)] * x0.size, constraints=cons,
                           options={"ftol": ftol, "maxiter": 3000})
        values.append(float(res.fun))
    x = tracker_best[1].reshape(K + 2, P)
    omega = PairMeasure(x[:-1] / x.sum(), spec.colors, x[-1] / x.sum())
    return ContractionResult(tracker_best[0], I_value, tracker_best[0] - I_value, omega, tuple(values))


__all__ = ["Infeasible", "OptimizationResult", "ContractionResult", "minimize_rate_I",
           "grid_search_rate_I", "contraction_check", "Predicate"]
