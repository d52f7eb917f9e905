import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semistatic.dual import conjugate_bound, dual_w_tilde, solve_v, solve_v_tilde
from semistatic.errors import DimensionError
from semistatic.instances import instance_a
from semistatic.primal import solve_u_tilde, stock_only_value
from semistatic.utility import LogUtility, PowerUtility

inside = st.floats(min_value=0.01, max_value=1 / 3 - 0.01)


def test_density_is_feasible(market_a):
    sol = solve_v_tilde(market_a, LogUtility(), 2.0, 1 / 6)
    P, h = market_a.probs, sol.density
    assert np.all(h > 0)
    assert P @ h == pytest.approx(2.0, abs=1e-12)
    assert P @ (h * market_a.payoffs[0]) == pytest.approx(2.0 / 6, abs=1e-12)
    assert P @ (h * market_a.gains[:, 0]) == pytest.approx(0.0, abs=1e-12)
    # single feasible measure at p = 1/6: (1/6, 1/2, 1/3)
    np.testing.assert_allclose(sol.measure_of(market_a), [1 / 6, 1 / 2, 1 / 3], atol=1e-12)


def test_outside_polar_cone(market_a):
    sol = solve_v(market_a, LogUtility(), 1.0, [0.5])
    assert sol.value == np.inf and sol.status == "infeasible"
    with pytest.raises(DimensionError):
        solve_v(market_a, LogUtility(), 1.0, [0.1, 0.1])


def test_w_tilde_is_stock_only_dual(market_a):
    """min over p of v(y, y p) is the stock-only dual, attained at the marginal price."""
    U = LogUtility()
    value, p_star, _ = dual_w_tilde(market_a, U, 1.0)
    assert p_star[0] == pytest.approx(2 / 9, abs=1e-10)
    assert value + 1.0 == pytest.approx(stock_only_value(market_a, U, 1.0).value, abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(inside, st.floats(min_value=0.3, max_value=4.0), st.floats(min_value=0.05, max_value=20.0))
def test_weak_duality(p, x, y):
    m = instance_a()
    for U in (LogUtility(), PowerUtility(0.5), PowerUtility(-1.0)):
        u = solve_u_tilde(m, U, x, p).value
        v = solve_v_tilde(m, U, y, p).value
        assert u <= v + x * y + 1e-9 * (1 + abs(u))


@settings(max_examples=20, deadline=None)
@given(inside, st.floats(min_value=0.3, max_value=4.0))
def test_v_tilde_convex_in_y(p, y):
    m = instance_a()
    U = PowerUtility(0.5)
    h = 0.05 * y
    lo, mid, hi = (solve_v_tilde(m, U, z, p).value for z in (y - h, y, y + h))
    assert mid <= 0.5 * (lo + hi) + 1e-12


@settings(max_examples=20, deadline=None)
@given(inside, st.floats(min_value=0.3, max_value=4.0))
def test_dual_gradients_match_differences(p, y):
    m = instance_a()
    U = LogUtility()
    sol = solve_v_tilde(m, U, y, p)
    h = 1e-6
    fy = (solve_v_tilde(m, U, y + h, p).value - solve_v_tilde(m, U, y - h, p).value) / (2 * h)
    fp = (solve_v_tilde(m, U, y, p + h).value - solve_v_tilde(m, U, y, p - h).value) / (2 * h)
    assert sol.dy == pytest.approx(fy, rel=1e-5, abs=1e-6)
    assert sol.grad_p[0] == pytest.approx(fp, rel=1e-5, abs=1e-5)


def test_strong_duality_kinked(market_s10, s10_utility):
    for p in (0.1, -0.1, 0.0, 0.001, -0.001):
        u = solve_u_tilde(market_s10, s10_utility, 2.0, p).value
        bound, _ = conjugate_bound(market_s10, s10_utility, 2.0, p)
        assert bound == pytest.approx(u, abs=1e-9)
