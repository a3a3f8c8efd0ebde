import numpy as np
import pytest

from paldp.measures import DegreeMeasure
from paldp.optimize import Infeasible, contraction_check, grid_search_rate_I, minimize_rate_I
from paldp.rates import pi_f, rate_I
from paldp.weights import WeightSpec


def test_threshold_instance_matches_grid_search():
    res = minimize_rate_I("M(0)>=0.9", kmax=3)
    _, grid = grid_search_rate_I("M(0)>=0.9", kmax=3)
    assert res.value > 0
    assert abs(res.value - grid) <= 1e-4
    assert res.value <= grid + 1e-12
    assert res.residual < 1e-6
    assert res.measure[0] >= 0.9 - 1e-10


def test_boundary_feasible_limit_law():
    res = minimize_rate_I("M(0)>=2/3", kmax=20)
    pi = pi_f(WeightSpec.plain(), kmax=20)
    assert res.value <= rate_I(pi).value + 1e-12
    assert res.value <= 1e-8


def test_unconstrained_value_is_signed():
    res = minimize_rate_I(kmax=20)
    assert res.value < 0  # the truncated rate is not bounded below by zero
    assert res.value <= rate_I(pi_f(WeightSpec.plain(), kmax=20)).value


def test_best_so_far_never_exceeds_start_results():
    res = minimize_rate_I("M(0)>=0.75", kmax=10, n_starts=8)
    assert len(res.start_values) == 8
    assert all(res.value <= v + 1e-15 for v in res.start_values)
    assert res.dispersion < 1e-6


def test_nested_constraints_are_monotone():
    values = [minimize_rate_I(f"M(0)>={x}", kmax=8).value for x in (0.5, 0.6, 0.7, 0.8, 0.9)]
    assert all(a <= b + 1e-6 for a, b in zip(values, values[1:]))
    both = minimize_rate_I("M(0)>=0.7 & M(1)<=0.1", kmax=8).value
    assert values[2] <= both + 1e-6


@pytest.mark.parametrize("cons", ["M(0)>=0.9 & M(1)>=0.5", "false", "M(2)>=1.5"])
def test_infeasible(cons):
    with pytest.raises(Infeasible):
        minimize_rate_I(cons, kmax=4)


def test_measure_is_a_probability():
    ell, value = minimize_rate_I("M(1)>=0.3", kmax=6)
    assert ell.probs.sum() + ell.tail_mass == pytest.approx(1.0, abs=1e-12)
    assert rate_I(ell).value == pytest.approx(value, abs=1e-9)


# contraction ---------------------------------------------------------------------

def test_single_color_gap_is_exactly_zero(plain, rng):
    for _ in range(5):
        ell = DegreeMeasure(rng.dirichlet(np.ones(6)) * 0.9, 0.1)
        assert contraction_check(ell, [1.0], plain).gap == 0.0


def test_two_colors_at_limit_law(two_color):
    pi = pi_f(WeightSpec.plain(), kmax=5)
    res = contraction_check(pi, [0.5, 0.5], two_color, 5)
    assert abs(res.I_value) <= 1e-12
    assert res.J_min <= 1e-6
    assert abs(res.gap) <= 1e-4


def test_two_colors_perturbed(two_color):
    pi = pi_f(WeightSpec.plain(), kmax=5)
    ell = DegreeMeasure(0.9 * pi.probs + 0.1 * np.eye(6)[0], 0.9 * pi.tail_mass)
    res = contraction_check(ell, [0.3, 0.7], two_color, 5)
    assert res.I_value > 0.05
    assert -1e-4 <= res.gap <= 1e-4
    assert min(res.start_values) >= res.J_min - 1e-12


def test_contraction_needs_color_independent_weights(colored, mu2):
    with pytest.raises(ValueError):
        contraction_check(pi_f(WeightSpec.plain(), kmax=4), mu2, colored)
