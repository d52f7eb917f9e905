import numpy as np
import pytest
from hypothesis import example, given, settings, strategies as st

from semistatic.errors import ArbitrageError, DimensionError
from semistatic.instances import instance_a, one_period
from semistatic.primal import (
    BOUNDARY,
    INFEASIBLE_STATUS,
    INTERIOR,
    solve_u,
    solve_u_tilde,
    stock_only_value,
)
from semistatic.utility import LogUtility, PowerUtility

inside = st.floats(min_value=0.01, max_value=1 / 3 - 0.01)


def test_stock_only_log(market_a):
    sol = stock_only_value(market_a, LogUtility(), 1.0)
    assert sol.strategy.ravel()[0] == pytest.approx(0.5, abs=1e-10)
    np.testing.assert_allclose(sol.wealth, [1.5, 1.0, 0.75], atol=1e-10)
    assert sol.value == pytest.approx(np.log(9 / 8) / 3, abs=1e-12)
    assert sol.marginal == pytest.approx(1.0, abs=1e-10)
    assert sol.marginal_q[0] == pytest.approx(2 / 9, abs=1e-10)


def test_marginal_price_trade_is_zero(market_a):
    sol = solve_u_tilde(market_a, LogUtility(), 1.0, 2 / 9)
    assert abs(sol.q[0]) <= 1e-9
    assert sol.value == pytest.approx(np.log(9 / 8) / 3, abs=1e-12)


def test_arbitrage_price(market_a):
    with pytest.raises(ArbitrageError):
        solve_u_tilde(market_a, LogUtility(), 1.0, 0.5)
    with pytest.raises(ArbitrageError):
        solve_u_tilde(market_a, LogUtility(), 1.0, 1 / 3)
    with pytest.raises(DimensionError):
        solve_u_tilde(market_a, LogUtility(), 1.0, [0.1, 0.1])


def test_outside_cone(market_a):
    sol = solve_u(market_a, LogUtility(), 1.0, [-4.0])
    assert sol.status == INFEASIBLE_STATUS and sol.value == -np.inf


def test_boundary_of_cone(market_a):
    # (1, -3) lies on the boundary: wealth is pinned at zero in the up state
    sol = solve_u(market_a, PowerUtility(0.5), 1.0, [-3.0])
    assert sol.status == BOUNDARY
    assert sol.wealth[0] == 0.0
    assert np.isfinite(sol.value)
    assert solve_u(market_a, LogUtility(), 1.0, [-3.0]).value == -np.inf


def test_kinked_exact(market_s10, s10_utility):
    U = s10_utility
    assert solve_u_tilde(market_s10, U, 2.0, 0.0).value == pytest.approx(4 / 3, abs=1e-12)
    assert solve_u_tilde(market_s10, U, 2.0, 0.001).value == pytest.approx(4 / 3 / 1.001, abs=1e-12)
    assert solve_u_tilde(market_s10, U, 2.0, -0.001).value == pytest.approx(
        4 / 3 + (2 / 3) * 0.001 / 1.001, abs=1e-12)
    sol = solve_u_tilde(market_s10, U, 2.0, 0.1)
    assert sol.q[0] == pytest.approx(1 / 1.1, abs=1e-10)
    assert sol.value == pytest.approx(4 / 3 / 1.1, abs=1e-12)
    sol = solve_u_tilde(market_s10, U, 2.0, -0.1)
    assert sol.q[0] == pytest.approx(1 / 1.1, abs=1e-10)


def test_replicable_claim_nonunique():
    m = one_period([2.0, 1.0, 0.5], [1 / 3] * 3, payoffs=[[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    sol = solve_u_tilde(m, LogUtility(), 1.0, [0.1, 0.2])
    assert sol.nonunique
    # minimum-norm representative lies along the non-replicable direction
    assert sol.q[0] * 2 == pytest.approx(sol.q[1] * 1, rel=1e-8)


@settings(max_examples=30, deadline=None)
@given(inside, st.floats(min_value=0.2, max_value=5.0))
def test_beats_stock_only(p, x):
    m = instance_a()
    U = LogUtility()
    assert solve_u_tilde(m, U, x, p).value >= stock_only_value(m, U, x).value - 1e-12


@settings(max_examples=30, deadline=None)
@given(inside, st.floats(min_value=0.2, max_value=5.0))
@example(p=0.01341671605709115, x=0.21875)
def test_log_scaling(p, x):
    """u~(x, p) = log x + u~(1, p) and q~ scales linearly."""
    m = instance_a()
    U = LogUtility()
    a, b = solve_u_tilde(m, U, 1.0, p), solve_u_tilde(m, U, x, p)
    assert b.value == pytest.approx(a.value + np.log(x), abs=1e-9)
    assert b.q[0] == pytest.approx(x * a.q[0], rel=1e-7, abs=1e-9)
    assert b.marginal == pytest.approx(1.0 / x, rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(inside, st.floats(min_value=0.2, max_value=5.0), st.sampled_from([0.5, -1.0]))
def test_concave_increasing_in_x(p, x, a):
    m = instance_a()
    U = PowerUtility(a)
    h = 0.05 * x
    lo, mid, hi = (solve_u_tilde(m, U, z, p).value for z in (x - h, x, x + h))
    assert lo < mid < hi
    assert mid >= 0.5 * (lo + hi) - 1e-12


@settings(max_examples=30, deadline=None)
@given(inside)
def test_envelope_marginal(p):
    m = instance_a()
    U = PowerUtility(0.5)
    sol = solve_u_tilde(m, U, 1.0, p)
    h = 1e-5
    fd = (solve_u_tilde(m, U, 1 + h, p).value - solve_u_tilde(m, U, 1 - h, p).value) / (2 * h)
    assert sol.marginal == pytest.approx(fd, rel=1e-6)
    assert sol.status == INTERIOR
    assert np.all(sol.wealth > 0)
