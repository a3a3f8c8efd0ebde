import math
from fractions import Fraction

import pytest

from paldp.empirics import exact_attachment_law
from paldp.oracle import (OracleLimitExceeded, enumerate_histories, exact_event_probability, exact_law,
                          iter_outcomes, n_limit, outcome_table)
from paldp.weights import WeightSpec

F = Fraction


def test_two_vertices(plain, colored, mu2):
    assert [o.probability for o in iter_outcomes(plain, None, 2)] == [1]
    assert sum(o.probability for o in iter_outcomes(colored, mu2, 2)) == 1


def test_three_vertices(plain):
    probs = sorted(o.probability for o in iter_outcomes(plain, None, 3))
    assert probs == [F(1, 3), F(2, 3)]


def test_four_vertex_law(plain):
    assert len(list(iter_outcomes(plain, None, 4))) == 6
    law = exact_law(plain, None, 4)
    assert law == {(F(1, 3), F(1, 3), F(1, 3)): F(2, 5), (F(2, 3), F(1, 3)): F(8, 15), (F(1),): F(1, 15)}
    assert exact_law(plain, None, 3) == {(F(1, 2), F(1, 2)): F(2, 3), (F(1),): F(1, 3)}


def test_attachment_statistic(plain):
    law = exact_law(plain, None, 3, "attachment")
    assert law == {(((0, "x", "x"), F(1, 2)), ((1, "x", "x"), F(1, 2))): F(2, 3),
                   (((0, "x", "x"), F(1)),): F(1, 3)}
    assert len(exact_law(plain, None, 4, "attachment")) == 3
    assert exact_law(plain, None, 5, lambda log: "same") == {"same": 1}


def test_event_probabilities(plain):
    assert exact_event_probability("M(0)>=0.99", plain, None, 4) == F(1, 15)
    assert exact_event_probability("true", plain, None, 6) == 1
    assert exact_event_probability("false", plain, None, 6) == 0


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_colored_mass_is_exactly_one(colored, mu2, n):
    assert sum(o.probability for o in iter_outcomes(colored, mu2, n)) == 1


def test_rational_reading_of_inputs():
    spec = WeightSpec.plain(0.1, 0.9)
    total = sum(o.probability for o in iter_outcomes(spec, None, 5))
    assert total == 1 and isinstance(total, Fraction)


def test_limits():
    assert n_limit(1) == 10 and n_limit(2) == 7
    with pytest.raises(OracleLimitExceeded) as info:
        list(iter_outcomes(WeightSpec.plain(), None, 11))
    assert info.value.estimate == math.factorial(10)
    with pytest.raises(OracleLimitExceeded):
        exact_event_probability("true", WeightSpec.colored(("r", "b"), 1.0, 1.0), [0.5, 0.5], 8)
    with pytest.raises(ValueError):
        list(iter_outcomes(WeightSpec.plain(), None, 1))


def test_histories_are_valid_logs(colored, mu2):
    for log, p in enumerate_histories(colored, mu2, 4):
        log.check()
        assert p > 0


def test_event_probability_matches_law(colored, mu2):
    law = exact_law(colored, mu2, 5)
    direct = sum(p for key, p in law.items() if key[0] >= F(1, 2))
    assert exact_event_probability("M(0)>=1/2", colored, mu2, 5) == direct


def test_outcome_table(plain):
    text = outcome_table(plain, None, 4)
    lines = text.strip().split("\n")
    assert lines[0] == "outcome,vertex_colors,events,numerator,denominator"
    assert len(lines) == 7
    assert sum(F(int(r.split(",")[3]), int(r.split(",")[4])) for r in lines[1:]) == 1
    assert lines[1].split(",")[2] == "2>1@0 3>1@1 4>1@2"
