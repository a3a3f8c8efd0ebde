"""Acceptance criteria, one test each.

Every test prints a single PASS/FAIL line (collected again in the terminal
summary) and then asserts the criterion at its stated tolerance.
"""

import json
import math
import resource
import subprocess
import sys
import time
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from conftest import record_criterion
from paldp import cli
from paldp.generator import generate
from paldp.measures import DegreeMeasure, PairMeasure, PathMeasure, jensen_floor, tail
from paldp.optimize import contraction_check, minimize_rate_I
from paldp.oracle import iter_outcomes, n_limit
from paldp.rare_events import (Tilt, decay_rate_scan, is_estimate, log_likelihood_ratio, naive_estimate,
                               suggest_tilt)
from paldp.rates import (pi_f, pi_f_pair_measure, rate_I, rate_J, rate_K, reference_I,
                         variational_K_hat)
from paldp.weights import WeightSpec

F = Fraction
PLAIN = WeightSpec.plain(1.0, 1.0)
COLORED = WeightSpec.colored(("r", "b"), [1.0, 1.5, 0.5, 1.25], [1.0, 0.5, 1.5, 0.75])
MU2 = np.array([0.3, 0.7])
TWO_COLOR_INI = """
[colors]
alphabet = r, b
law = 0.3, 0.7

[weights]
gamma = 1
beta = 1
"""


def _oracle_law(tmp_path, n):
    out = tmp_path / f"oracle{n}"
    start = time.perf_counter()
    assert cli.main(["oracle", "--n", str(n), "--out", str(out)]) == 0
    elapsed = time.perf_counter() - start
    law = {}
    for row in (out / "oracle_law.csv").read_text().strip().splitlines()[1:]:
        key, num, den = row.split(",")
        law[tuple(F(x) for x in key.split())] = F(int(num), int(den))
    return law, elapsed


def test_criterion_01_oracle_exactness(tmp_path):
    law3, t3 = _oracle_law(tmp_path, 3)
    law4, t4 = _oracle_law(tmp_path, 4)
    ok = (law3 == {(F(1, 2), F(1, 2)): F(2, 3), (F(1),): F(1, 3)}
          and law4 == {(F(1, 3), F(1, 3), F(1, 3)): F(2, 5), (F(2, 3), F(1, 3)): F(8, 15), (F(1),): F(1, 15)}
          and t3 < 1 and t4 < 1)
    record_criterion(1, ok, f"n=3 law {sorted(map(str, law3.values()))}, n=4 law {sorted(map(str, law4.values()))}, "
                            f"runtimes {t3:.2f}s/{t4:.2f}s")
    assert ok


def test_criterion_02_radon_nikodym_exactness():
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    worst, count = 0.0, 0
    for spec, mu in ((PLAIN, np.array([1.0])), (COLORED, MU2)):
        q = len(spec.colors)
        tilts = [Tilt(rng.normal(0, 0.5, q), rng.normal(0, 1, (1, 4, q * q)), float(rng.normal()))
                 for _ in range(3)]
        for n in (3, 4, 5):
            base = {(o.colors, o.parents): o.probability for o in iter_outcomes(spec, mu, n)}
            for tilt in tilts:
                for o in iter_outcomes(spec, mu, n, tilt=tilt):
                    p = base[(o.colors, o.parents)]
                    with mpmath.workdps(60):
                        exact = mpmath.log(o.probability) - mpmath.log(mpmath.mpf(p.numerator) / p.denominator)
                    llr = log_likelihood_ratio(o.to_log(spec), tilt, spec, mu)
                    worst = max(worst, abs(float(exact - llr)))
                    count += 1
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and elapsed < 30
    record_criterion(2, ok, f"max |LLR - log(P~/P)| = {worst:.2e} over {count} outcomes, {elapsed:.1f}s")
    assert ok


def test_criterion_03_identity_tilt():
    values = []
    for i in range(1000):
        spec, mu = (PLAIN, None) if i % 2 == 0 else (COLORED, MU2)
        tilt = Tilt.identity(spec, kg=200)
        values.append(log_likelihood_ratio(generate(spec, mu, 200, seed=3, replica=i), tilt, spec, mu))
    ok = all(v == 0.0 for v in values)
    record_criterion(3, ok, f"LLR on 1000 logs: max |LLR| = {max(map(abs, values))!r}")
    assert ok


def test_criterion_04_limit_distribution():
    a = pi_f(WeightSpec.plain(1, 1), kmax=100)
    b = pi_f(WeightSpec.plain(1, 2), kmax=100)
    err_a = np.max(np.abs(a.probs[:4] - [2 / 3, 1 / 6, 1 / 15, 1 / 30]))
    err_b = np.max(np.abs(b.probs[:3] - [0.6, 0.2, 3 / 35]))
    fixed = 0.0
    for pi, (g, be) in ((a, (1, 1)), (b, (1, 2))):
        f = g * np.arange(101) + be
        fixed = max(fixed, float(np.max(np.abs(pi.probs - (g + be) / f * tail(pi)))))
    ok = err_a <= 1e-12 and err_b <= 1e-12 and fixed <= 1e-12
    record_criterion(4, ok, f"closed-form errors {err_a:.1e}, {err_b:.1e}; fixed-point error {fixed:.1e}")
    assert ok


def test_criterion_05_lln(tmp_path):
    # per-pair limit laws are the conditional limits only when weights ignore colour
    cfg = tmp_path / "two_color.ini"
    cfg.write_text(TWO_COLOR_INI)
    start = time.perf_counter()
    assert cli.main(["lln", "--n", "100000", "--reps", "5", "--seed", "7", "--out", str(tmp_path / "p")]) == 0
    assert cli.main(["lln", "--n", "100000", "--reps", "5", "--seed", "7", "--config", str(cfg),
                     "--out", str(tmp_path / "c")]) == 0
    elapsed = time.perf_counter() - start
    plain = json.loads((tmp_path / "p" / "lln.json").read_text())
    color = json.loads((tmp_path / "c" / "lln.json").read_text())
    ok = max(plain["tv"]) <= 0.02 and max(color["tv"]) <= 0.03 and elapsed < 10
    record_criterion(5, ok, f"TV to pi_f: plain max {max(plain['tv']):.4f} (<=0.02), "
                            f"2-colour max {max(color['tv']):.4f} (<=0.03), {elapsed:.1f}s; "
                            f"TV to the tail law of pi_f: {max(plain['tv_tail_law']):.4f} / "
                            f"{max(color['tv_tail_law']):.4f}")
    assert ok


def test_criterion_06_rate_zeros():
    i_val = rate_I(pi_f(PLAIN, kmax=200)).value
    j_val = rate_J(pi_f_pair_measure(COLORED, MU2, 200), MU2, COLORED).value
    ok = i_val <= 1e-8 and j_val <= 1e-8
    record_criterion(6, ok, f"rate_I(pi_f) = {i_val:.2e}, rate_J(product of limit laws) = {j_val:.2e}")
    assert ok


def test_criterion_07_jensen_floor():
    rng = np.random.default_rng(7)
    K, worst_margin = 20, math.inf
    for _ in range(1000):
        tau = rng.uniform(0.01, 0.3)
        r = rng.uniform(0.2, 0.9)
        J = int(math.ceil(math.log(1e-16) / math.log(r)))
        geo = tau * (1 - r) * r ** np.arange(J)
        ell = DegreeMeasure(np.concatenate([(1 - tau) * rng.dirichlet(np.ones(K + 1)), geo]),
                            max(0.0, 1.0 - (1 - tau) - float(geo.sum())))
        value = rate_I(ell).value
        worst_margin = min(worst_margin, value - jensen_floor(reference_I(ell)))
    Kg = 400
    witness = rate_I(DegreeMeasure(0.5 ** np.arange(1, Kg + 2), 0.5 ** (Kg + 1))).value
    ok = worst_margin >= -1e-9 and abs(witness - (-0.1854)) <= 5e-4
    record_criterion(7, ok, f"min rate_I - floor over 1000 measures = {worst_margin:.3e}; "
                            f"geometric witness = {witness:.6f}")
    assert ok


def _mean_at_most_one(rng, K):
    d = rng.dirichlet(np.ones(K + 1))
    s = min(1.0, 1.0 / float(np.arange(K + 1) @ d)) * rng.uniform(0.3, 1.0)
    probs = s * d
    probs[0] += 1 - s
    return DegreeMeasure(probs)


def test_criterion_08_variational_inequality():
    """Instances have conditional means at most 1, as every snapshot of the process does."""
    rng = np.random.default_rng(8)
    worst = math.inf
    for i in range(20):
        spec, mu = (PLAIN, np.array([1.0])) if i % 2 == 0 else (COLORED, MU2)
        P = spec.n_pairs
        conds = [_mean_at_most_one(rng, 15) for _ in range(P)]
        w = rng.dirichlet(np.ones(P))
        omega = PairMeasure.from_conditionals(w, conds, spec.colors)
        nu = PathMeasure.constant(conds, w, spec.colors)
        worst = min(worst, variational_K_hat(omega, nu, mu, spec).value - rate_K(omega, nu, mu, spec).value)
    ok = worst >= -1e-6
    record_criterion(8, ok, f"min (K_hat - K) over 20 instances = {worst:.4f}")
    assert ok


def test_criterion_09_estimator_agreement():
    event, n, reps = "M(0)>=0.75", 100, 100_000
    start = time.perf_counter()
    ell_star = minimize_rate_I(event, 1.0, 1.0, 20).measure
    tilt = suggest_tilt(ell_star, PLAIN)
    imp = is_estimate(event, PLAIN, None, tilt, n, reps, seed=(0, 1))
    naive = naive_estimate(event, PLAIN, None, n, reps, seed=(0, 0))
    elapsed = time.perf_counter() - start
    combined = math.hypot(imp.stderr, naive.stderr)
    agree = abs(imp.p_hat - naive.p_hat) <= 3 * combined
    mean_one = abs(imp.mean_weight - 1.0) <= 4 * imp.mean_weight_stderr
    ok = agree and mean_one and elapsed < 60
    record_criterion(9, ok, f"IS {imp.p_hat:.3e} +- {imp.stderr:.1e} (hits {imp.hits}, ess {imp.ess:.1f}), "
                            f"naive {naive.p_hat:.3e} +- {naive.stderr:.1e} (hits {naive.hits}); "
                            f"agreement {'ok' if agree else 'fails'}; mean e^-LLR = "
                            f"{imp.mean_weight:.3e} +- {imp.mean_weight_stderr:.1e}; {elapsed:.1f}s")
    assert ok


def test_criterion_10_contraction():
    two = WeightSpec.colored(("r", "b"), 1.0, 1.0)
    pi = pi_f(PLAIN, kmax=5)
    perturbed = DegreeMeasure(0.9 * pi.probs + 0.1 * np.eye(6)[0], 0.9 * pi.tail_mass)
    gaps = [contraction_check(ell, mu, two, 5).gap
            for ell in (pi, perturbed) for mu in ([0.5, 0.5], [0.3, 0.7])]
    single = [contraction_check(ell, [1.0], PLAIN, 5).gap for ell in (pi, perturbed)]
    ok = all(-1e-4 <= g <= 1e-4 for g in gaps) and all(g == 0.0 for g in single)
    record_criterion(10, ok, f"two-colour gaps {[f'{g:.1e}' for g in gaps]}, one-colour gaps {single}")
    assert ok


def test_criterion_11_decay_scan():
    rows = decay_rate_scan("M(0)>=0.99", list(range(3, 11)), PLAIN)
    r3, r4 = rows[0]["rate"], rows[1]["rate"]
    ok = (abs(r3 - 0.36620) <= 1e-5 and abs(r4 - 0.67701) <= 1e-5
          and all(r["method"] == "oracle" for r in rows) and rows[-1]["n"] == 10 and n_limit(1) >= 10)
    record_criterion(11, ok, f"rate(3) = {r3:.5f}, rate(4) = {r4:.5f}, oracle through n = {rows[-1]['n']} "
                             f"(p = {rows[-1]['exact']})")
    assert ok


def _generate_run(out):
    before = resource.getrusage(resource.RUSAGE_CHILDREN).ru_maxrss
    start = time.perf_counter()
    subprocess.run([sys.executable, "-m", "paldp", "generate", "--n", "1000000", "--seed", "1", "--out", str(out)],
                   check=True, capture_output=True)
    elapsed = time.perf_counter() - start
    peak = resource.getrusage(resource.RUSAGE_CHILDREN).ru_maxrss
    return elapsed, max(before, peak) / 1024


def test_criterion_12_performance(tmp_path):
    t1, mem1 = _generate_run(tmp_path / "a")
    t2, mem2 = _generate_run(tmp_path / "b")
    same = (tmp_path / "a" / "eventlog.csv").read_bytes() == (tmp_path / "b" / "eventlog.csv").read_bytes()
    ok = max(t1, t2) <= 2.0 and max(mem1, mem2) <= 500 and same
    record_criterion(12, ok, f"generate --n 1000000: {t1:.2f}s / {t2:.2f}s, peak RSS {max(mem1, mem2):.0f} MB, "
                             f"byte-identical: {same}")
    assert ok
