import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semistatic.errors import SchemaError
from semistatic.utility import (
    DomainError,
    LogUtility,
    PiecewiseLinearUtility,
    PowerUtility,
    bidual_check,
    conjugate_eval,
    fenchel_young_gap,
    inverse_marginal,
    kinked_utility,
    parse_utility,
    read_pwl,
    u_marginal,
)

positive = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)
alphas = st.sampled_from([-3.0, -1.0, -0.25, 0.25, 0.5, 0.9])


def test_log_closed_forms():
    U = LogUtility()
    assert U.value(math.e) == pytest.approx(1.0)
    assert U.value(0.0) == -np.inf
    assert U.conjugate(1.0) == pytest.approx(-1.0)
    assert U.inverse_marginal(4.0) == pytest.approx(0.25)


def test_power_closed_forms():
    U = PowerUtility(0.5)
    assert U.value(4.0) == pytest.approx(4.0)
    assert U.beta == pytest.approx(-1.0)
    # V(y) = -(y^b)/b = 1/y for a = 1/2
    assert U.conjugate(2.0) == pytest.approx(0.5)
    assert PowerUtility(-1.0).value(0.0) == -np.inf
    assert PowerUtility(0.5).value(0.0) == 0.0
    with pytest.raises(SchemaError):
        PowerUtility(1.0)
    with pytest.raises(SchemaError):
        PowerUtility(0.0)


@settings(max_examples=200, deadline=None)
@given(positive, positive, alphas)
def test_fenchel_young_power(x, y, a):
    U = PowerUtility(a)
    gap = fenchel_young_gap(U, x, y)
    assert gap >= -1e-9 * (1 + abs(U.value(x)) + x * y)


@settings(max_examples=200, deadline=None)
@given(positive, positive)
def test_fenchel_young_log(x, y):
    assert fenchel_young_gap(LogUtility(), x, y) >= -1e-12 * (1 + x * y)


@settings(max_examples=200, deadline=None)
@given(positive, alphas)
def test_equality_at_marginal(x, a):
    for U in (LogUtility(), PowerUtility(a)):
        y = U.marginal(x)
        assert fenchel_young_gap(U, x, y) == pytest.approx(0.0, abs=1e-9 * (1 + abs(U.value(x)) + x * y))
        assert U.inverse_marginal(y) == pytest.approx(x, rel=1e-10)


@settings(max_examples=100, deadline=None)
@given(positive, alphas)
def test_conjugate_derivative(y, a):
    U = PowerUtility(a)
    h = 1e-6 * y
    fd = (U.conjugate(y + h) - U.conjugate(y - h)) / (2 * h)
    assert fd == pytest.approx(-U.inverse_marginal(y), rel=1e-5)


def test_bidual():
    xs = [0.1, 0.5, 1.0, 2.0, 7.0]
    assert bidual_check(LogUtility(), xs) <= 1e-9
    assert bidual_check(PowerUtility(0.5), xs) <= 1e-9
    assert bidual_check(PowerUtility(-1.0), xs) <= 1e-9


def test_domain_errors():
    with pytest.raises(DomainError):
        u_marginal(LogUtility(), 0.0)
    with pytest.raises(DomainError):
        conjugate_eval(LogUtility(), -1.0)
    with pytest.raises(DomainError):
        inverse_marginal(PowerUtility(0.5), 0.0)


def test_kinked_utility_values():
    U = kinked_utility()
    assert U.value(1.0) == 0.0
    assert U.value(0.5) == pytest.approx(-500.0)
    assert U.value(3.0) == pytest.approx(2.0)
    assert U.value(4.0) == pytest.approx(2.001)
    assert U.value(-1.0) == -np.inf
    assert U.subdifferential(1.0) == (1.0, 1000.0)
    assert U.subdifferential(2.0) == (1.0, 1.0)
    # V(y) = max_k (U(k) - k y) over knots, +inf below the last slope
    assert U.conjugate(1.0) == pytest.approx(max(U.value(k) - k for k in U.knots))
    assert U.conjugate(1e-7) == np.inf


def test_piecewise_fenchel_young():
    U = kinked_utility()
    rng = np.random.default_rng(0)
    xs = rng.uniform(0.0, 6.0, 200)
    ys = np.exp(rng.uniform(np.log(2e-6), np.log(2e6), 200))
    assert np.all(fenchel_young_gap(U, xs, ys) >= -1e-9)
    for k, x in enumerate(U.knots[1:], 1):
        lo, hi = U.subdifferential(x)
        assert fenchel_young_gap(U, x, 0.5 * (lo + hi)) == pytest.approx(0.0, abs=1e-9 * (1 + x * hi))


def test_piecewise_validation():
    with pytest.raises(SchemaError):
        PiecewiseLinearUtility((1.0,), (1.0, 2.0))
    with pytest.raises(SchemaError):
        PiecewiseLinearUtility((1.0, 0.5), (3.0, 2.0, 1.0))


def test_read_pwl(tmp_path):
    f = tmp_path / "u.txt"
    f.write_text("# breakpoint slope\n0 1e6\n0.5 1000\n1 1\n3 1e-3\n4 1e-6\nvalue 1 0\n")
    U = read_pwl(f)
    assert U == kinked_utility()
    bad = tmp_path / "bad.txt"
    bad.write_text("0.5 2\n")
    with pytest.raises(SchemaError):
        read_pwl(bad)


def test_parse_utility(tmp_path):
    assert isinstance(parse_utility("log"), LogUtility)
    assert parse_utility("power:0.5").alpha == 0.5
    assert parse_utility("s10") == kinked_utility()
    for bad in ("exp", "power:x", "power:1"):
        with pytest.raises(SchemaError):
            parse_utility(bad)
