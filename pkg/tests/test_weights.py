import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from paldp.weights import ConfigError, InvalidSpec, WeightSpec, evaluate, read_config, validate


def test_evaluate_plain():
    s = WeightSpec.plain(1.0, 1.0)
    assert evaluate(s, 0.5, 0) == 1.0
    assert evaluate(s, 0.5, 3) == 4.0
    assert evaluate(WeightSpec.plain(1.0, 2.0), 1.0, 2) == 4.0


def test_evaluate_two_buckets():
    s = WeightSpec(("x",), (0.5, 1.0), [[1.0], [2.0]], [[1.0], [0.0]], allow_zero_beta=True)
    assert evaluate(s, 0.75, 3) == 6.0
    assert evaluate(s, 0.5, 3) == 4.0


@pytest.mark.parametrize("t", [0.0, -0.1, 1.5])
def test_evaluate_domain(t):
    with pytest.raises(ValueError):
        evaluate(WeightSpec.plain(), t, 1)


def test_validate_passes_plain():
    assert validate(WeightSpec.plain(1.0, 1.0)).ok


def test_validate_non_constant_c():
    s = WeightSpec.colored(("a", "b"), [1.0, 2.0, 1.0, 1.0], 1.0)
    report = validate(s)
    assert not report["constant_c"].passed
    assert "bucket 0" in report["constant_c"].detail
    with pytest.raises(InvalidSpec):
        s.require_valid()


def test_validate_small_c():
    report = validate(WeightSpec.plain(0.3, 0.3))
    assert not report["min_c_ge_1"].passed
    assert [c.name for c in report.failures] == ["min_c_ge_1"]


def test_zero_beta_needs_flag():
    assert not validate(WeightSpec.plain(2.0, 0.0))["beta_positive"].passed
    assert validate(WeightSpec.plain(2.0, 0.0, allow_zero_beta=True)).ok


def test_gamma_must_be_positive():
    assert not validate(WeightSpec.plain(0.0, 2.0))["gamma_positive"].passed


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 10), st.floats(0.01, 10), st.integers(0, 1000), st.floats(1e-6, 1.0))
def test_evaluate_is_affine(gamma, beta, k, t):
    s = WeightSpec.plain(gamma, beta)
    assert evaluate(s, t, k + 1) - evaluate(s, t, k) == pytest.approx(gamma, rel=1e-12, abs=1e-9)


def test_class_sum_identity(rng):
    from paldp.generator import class_normalizer
    s = WeightSpec.colored(("r", "b"), [1.0, 1.5, 0.5, 1.25], [1.0, 0.5, 1.5, 0.75])
    for _ in range(100):
        degrees = rng.integers(0, 20, size=rng.integers(1, 30))
        x1, x2 = rng.integers(0, 2, size=2)
        direct = sum(s.evaluate(0.5, int(k), (s.colors[x1], s.colors[x2])) for k in degrees)
        assert class_normalizer(s, 0, x1, x2, int(degrees.sum()), degrees.size) == pytest.approx(direct, rel=1e-13)


CONFIG = """
[colors]
alphabet = r, b
law = 0.25, 0.75

[weights]
buckets = 0.5, 1.0
gamma = 1, 2
beta = 1, 0.5
gamma.r.b = 1.5, 2.25
beta.r.b = 0.5, 0.25

[experiment]
n = 100
"""


def test_read_config():
    spec, mu, exp = read_config(CONFIG)
    assert spec.colors == ("r", "b")
    assert mu.tolist() == [0.25, 0.75]
    assert spec.gamma[:, 1].tolist() == [1.5, 2.25]
    assert spec.gamma[:, 0].tolist() == [1.0, 2.0]
    assert exp == {"n": "100"}
    assert validate(spec).ok


def test_config_round_trip():
    spec, _, _ = read_config(CONFIG)
    again, _, _ = read_config(spec.to_config())
    np.testing.assert_array_equal(again.gamma, spec.gamma)
    np.testing.assert_array_equal(again.beta, spec.beta)
    np.testing.assert_array_equal(again.boundaries, spec.boundaries)


@pytest.mark.parametrize("text", [
    "[weights]\ngamma = 1\nbeta = 1\ncolour = 3\n",
    "[weights]\ngamma = 1\n",
    "[bogus]\n[weights]\ngamma = 1\nbeta = 1\n",
    "[colors]\nalphabet = a\nextra = 1\n[weights]\ngamma = 1\nbeta = 1\n",
    "[weights]\nbuckets = 0.5, 1\ngamma = 1, 2, 3\nbeta = 1\n",
])
def test_config_rejects_bad_input(text):
    with pytest.raises(ConfigError):
        read_config(text)
