import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semistatic.errors import DimensionError, UnboundedError
from semistatic.geometry import (
    check_nonreplicability,
    cone_K_contains,
    cone_K_halfspaces,
    cone_K_interior,
    cone_L_contains,
    cone_radius,
    fiber_vertices,
    largest_feasible_position,
    martingale_polytope,
    price_set,
    superhedging_cost,
    superreplication_price,
)
from semistatic.instances import binomial_tree, one_period

inside = st.floats(min_value=0.005, max_value=1 / 3 - 0.005)


def test_martingale_vertices(market_a):
    V = martingale_polytope(market_a).vertices
    np.testing.assert_allclose(V, [[0, 1, 0], [1 / 3, 0, 2 / 3]], atol=1e-12)


def test_price_set_a(market_a):
    ps = price_set(market_a)
    np.testing.assert_allclose(ps.vertices[:, 0], [0.0, 1 / 3], atol=1e-12)
    assert ps.full_dimensional
    assert 1 / 6 in ps
    assert 0.0 not in ps and 1 / 3 not in ps and 0.5 not in ps
    assert ps.in_closure(0.0) and ps.in_closure(1 / 3) and not ps.in_closure(0.4)


def test_price_set_binary(market_s10):
    np.testing.assert_allclose(price_set(market_s10).vertices[:, 0], [-1.0, 1.0], atol=1e-12)


def test_superreplication(market_a):
    assert superreplication_price(market_a, [1.0, 0.0, 0.0]) == pytest.approx(1 / 3, abs=1e-12)
    assert -superreplication_price(market_a, [-1.0, 0.0, 0.0]) == pytest.approx(0.0, abs=1e-12)
    x, H = superhedging_cost(market_a, [1.0, 0.0, 0.0])
    assert x == pytest.approx(1 / 3, abs=1e-12)
    wealth = x + market_a.gains @ H
    assert np.all(wealth >= np.array([1.0, 0.0, 0.0]) - 1e-12)


def test_fiber(market_a):
    V = fiber_vertices(market_a, 1 / 6)
    assert V.shape[0] == 1
    np.testing.assert_allclose(V[0], [1 / 6, 1 / 2, 1 / 3], atol=1e-12)


def test_cones(market_a):
    assert cone_K_contains(market_a, 1.0, -3.0)
    assert not cone_K_contains(market_a, 1.0, -3.1)
    assert not cone_K_interior(market_a, 1.0, -3.0)
    assert cone_K_contains(market_a, 0.0, 1.0)
    assert cone_L_contains(market_a, 1.0, 1 / 6)
    assert not cone_L_contains(market_a, 1.0, 0.5)
    np.testing.assert_allclose(cone_K_halfspaces(market_a), [[1, 0], [1, 1 / 3]], atol=1e-12)


def test_m_values(market_a):
    assert largest_feasible_position(market_a, 1.0, 1 / 6)[0] == pytest.approx(6.0, abs=1e-9)
    assert largest_feasible_position(market_a, 1.0, 1 / 12)[0] == pytest.approx(12.0, abs=1e-9)
    assert largest_feasible_position(market_a, 2.0, 1 / 6)[0] == pytest.approx(12.0, abs=1e-9)
    with pytest.raises(UnboundedError):
        largest_feasible_position(market_a, 1.0, 0.5)


def test_d_values(market_a):
    d, v = cone_radius(market_a, [1.0, 1 / 6])
    assert d == pytest.approx(np.sqrt(40), abs=1e-9)
    np.testing.assert_allclose(v, [2.0, -6.0], atol=1e-9)
    assert cone_radius(market_a, [0.5, 1 / 12])[0] == pytest.approx(2 * np.sqrt(40), abs=1e-9)
    with pytest.raises(UnboundedError):
        cone_radius(market_a, [1.0, 0.0])
    with pytest.raises(DimensionError):
        cone_radius(market_a, [1.0])


@settings(max_examples=50, deadline=None)
@given(inside, st.floats(min_value=0.1, max_value=10.0))
def test_m_homogeneous_and_analytic(p, t):
    from semistatic.instances import instance_a
    m = instance_a()
    m1 = largest_feasible_position(m, 1.0, p)[0]
    assert m1 == pytest.approx(max(1 / p, 1 / (1 / 3 - p)), rel=1e-9)
    assert largest_feasible_position(m, t, p)[0] == pytest.approx(t * m1, rel=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 5), inside)
def test_polarity(q, x_shift, y, p):
    """v in K and w in L give v.w >= 0."""
    from semistatic.instances import instance_a
    m = instance_a()
    x = max(0.0, -q / 3) + abs(x_shift)  # smallest x with (x, q) in K, plus slack
    assert cone_K_contains(m, x, q)
    assert cone_L_contains(m, y, y * p)
    assert x * y + q * y * p >= -1e-9


def test_replicability():
    call = binomial_tree(2, payoff=lambda s: max(s - 1.0, 0.0))
    rep = check_nonreplicability(call)
    # two-state steps complete the market
    assert not rep.nonreplicable and rep.direction[0] > 0
    m = one_period([2.0, 1.0, 0.5], [1 / 3] * 3, payoffs=[[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    rep = check_nonreplicability(m)
    assert not rep.nonreplicable
    np.testing.assert_allclose(rep.direction, np.array([2.0, -1.0]) / np.sqrt(5), atol=1e-9)


def test_nonreplicable(market_a):
    assert check_nonreplicability(market_a).nonreplicable
