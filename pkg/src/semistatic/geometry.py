"""Convex geometry of a finite semi-static market.

Objects: the closed martingale polytope, the arbitrage-free price set, the
feasible cone K (endowments (x, q) that can be hedged to a nonnegative
terminal wealth), its polar L, the largest feasible position m(x, p) and the
truncated-cone radius d(w).

At finite scale (x, q) is feasible iff x dominates the superreplication cost
of -q.f, so K is cut out by one halfspace per martingale vertex Q:
x + q.E_Q[f] >= 0.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import DimensionError, InfeasibleError, UnboundedError
from .lp import (
    FEAS_TOL,
    LinearProgram,
    Polytope,
    enumerate_vertices,
    min_residual,
    nullspace,
    solve_lp,
    standard_form_vertices,
    strict_feasibility,
)
from .market import MarketModel

INTERIOR_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class MartingalePolytope:
    A: np.ndarray
    b: np.ndarray
    vertices: np.ndarray  # (k, N)

    def martingale_residual(self, Q) -> float:
        return float(np.max(np.abs(self.A @ np.asarray(Q) - self.b)))


@dataclass(frozen=True, eq=False)
class PriceSet:
    """The polytope {E_Q[f] : Q closed martingale measure} and its interior tests."""

    model: MarketModel
    vertices: np.ndarray  # (k, n), deduplicated images of martingale vertices

    @property
    def n(self) -> int:
        return self.vertices.shape[1]

    @property
    def lower(self) -> np.ndarray:
        return self.vertices.min(axis=0)

    @property
    def upper(self) -> np.ndarray:
        return self.vertices.max(axis=0)

    @property
    def affine_dimension(self) -> int:
        if self.vertices.shape[0] <= 1:
            return 0
        return int(np.linalg.matrix_rank(self.vertices[1:] - self.vertices[0], tol=1e-9))

    @property
    def full_dimensional(self) -> bool:
        return self.affine_dimension == self.n

    def in_closure(self, p, tol: float = FEAS_TOL) -> bool:
        A, b = _fiber_system(self.model, p)
        res, _ = min_residual(A, b)
        return res <= tol * (1.0 + float(np.max(np.abs(b))))

    def in_relative_interior(self, p) -> bool:
        """p is the price under some equivalent (strictly positive) martingale measure."""
        A, b = _fiber_system(self.model, p)
        try:
            value, _ = strict_feasibility(A, b)
        except InfeasibleError:
            return False
        return value > INTERIOR_TOL

    def __contains__(self, p) -> bool:
        """Membership in the set of arbitrage-free prices (the relative interior)."""
        return self.in_relative_interior(p)


class _Geometry:
    def __init__(self, model: MarketModel):
        A, b = model.martingale_system()
        V = standard_form_vertices(A, b)
        self.martingale = MartingalePolytope(A, b, V)
        P = V @ model.payoffs.T  # (k, n)
        keep: list[np.ndarray] = []
        for row in P:
            if not any(np.max(np.abs(row - r), initial=0.0) <= 1e-10 for r in keep):
                keep.append(row)
        P = np.array(keep).reshape(len(keep), model.n_derivatives)
        if P.size:
            P = P[np.lexsort(P.T[::-1])]
        self.prices = PriceSet(model, P)


_CACHE: "weakref.WeakKeyDictionary[MarketModel, _Geometry]" = weakref.WeakKeyDictionary()


def _geometry(model: MarketModel) -> _Geometry:
    g = _CACHE.get(model)
    if g is None:
        g = _Geometry(model)
        _CACHE[model] = g
    return g


def martingale_polytope(model: MarketModel) -> MartingalePolytope:
    return _geometry(model).martingale


def price_set(model: MarketModel) -> PriceSet:
    return _geometry(model).prices


def _fiber_system(model: MarketModel, p):
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if p.size != model.n_derivatives:
        raise DimensionError(f"price vector has {p.size} entries, expected {model.n_derivatives}")
    A, b = model.martingale_system()
    return np.vstack([A, model.payoffs]), np.concatenate([b, p])


def fiber_vertices(model: MarketModel, p) -> np.ndarray:
    """Vertices of the closed martingale measures pricing f at p."""
    A, b = _fiber_system(model, p)
    return standard_form_vertices(A, b)


def superreplication_price(model: MarketModel, claim) -> float:
    """sup_Q E_Q[claim] over closed martingale measures, by LP."""
    claim = np.asarray(claim, dtype=float)
    A, b = model.martingale_system()
    res = solve_lp(LinearProgram(-claim, A_eq=A, b_eq=b))
    return -res.value


def superhedging_cost(model: MarketModel, claim) -> tuple[float, np.ndarray]:
    """min x such that x + (H.S)_T >= claim; returns (x, H). LP dual of the above."""
    claim = np.asarray(claim, dtype=float)
    k = model.gains.shape[1]
    c = np.zeros(1 + k)
    c[0] = 1.0
    A_ub = -np.hstack([np.ones((model.n_states, 1)), model.gains])
    res = solve_lp(LinearProgram(c, A_ub=A_ub, b_ub=-claim, lower=np.full(1 + k, -np.inf)))
    return res.value, res.x[1:]


def _k_slack(model: MarketModel, x, q) -> float:
    q = np.atleast_1d(np.asarray(q, dtype=float))
    P = price_set(model).vertices
    if P.shape[0] == 0:
        return float(x)
    return float(np.min(x + P @ q)) if q.size else float(x)


def cone_K_contains(model: MarketModel, x, q, tol: float = FEAS_TOL) -> bool:
    q = np.atleast_1d(np.asarray(q, dtype=float))
    return _k_slack(model, x, q) >= -tol * (1.0 + abs(x) + float(np.sum(np.abs(q))))


def cone_K_interior(model: MarketModel, x, q, tol: float = FEAS_TOL) -> bool:
    q = np.atleast_1d(np.asarray(q, dtype=float))
    return _k_slack(model, x, q) > tol * (1.0 + abs(x) + float(np.sum(np.abs(q))))


def cone_L_contains(model: MarketModel, y, r, tol: float = FEAS_TOL) -> bool:
    """(y, r) in the closed polar cone: r = E[h f] for some nonnegative martingale density of mass y."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if y < -tol:
        return False
    A, b = model.martingale_system()
    A = np.vstack([A, model.payoffs])
    b = np.concatenate([b * max(y, 0.0), r])
    res, _ = min_residual(A, b)
    return res <= tol * (1.0 + abs(y) + float(np.sum(np.abs(r))))


def cone_K_halfspaces(model: MarketModel) -> np.ndarray:
    """Rows (1, E_Q[f]) for each price vertex: K = {v : rows @ v >= 0}."""
    P = price_set(model).vertices
    return np.hstack([np.ones((P.shape[0], 1)), P])


def largest_feasible_position(model: MarketModel, x: float, p) -> tuple[float, np.ndarray]:
    """max |q| subject to (x - q.p, q) in K; attained at a vertex."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    P = price_set(model).vertices
    # x - q.p + q.p_v >= 0  <=>  (p - p_v).q <= x
    poly = Polytope(p[None, :] - P, np.full(P.shape[0], float(x)))
    try:
        V = enumerate_vertices(poly)
    except UnboundedError:
        raise UnboundedError(f"price {p} is not an arbitrage-free price; m is infinite") from None
    norms = np.linalg.norm(V, axis=1)
    k = int(np.argmax(norms))
    return float(norms[k]), V[k]


def cone_radius(model: MarketModel, w) -> tuple[float, np.ndarray]:
    """d(w) = sup{|v| : v in K, v.w <= 1} with an attaining vertex."""
    w = np.asarray(w, dtype=float).ravel()
    if w.size != model.n_derivatives + 1:
        raise DimensionError(f"w must have {model.n_derivatives + 1} entries")
    Hs = cone_K_halfspaces(model)
    poly = Polytope(np.vstack([-Hs, w[None, :]]), np.concatenate([np.zeros(Hs.shape[0]), [1.0]]))
    try:
        V = enumerate_vertices(poly)
    except UnboundedError:
        raise UnboundedError("w is not in the interior of the polar cone; d is infinite") from None
    norms = np.linalg.norm(V, axis=1)
    k = int(np.argmax(norms))
    return float(norms[k]), V[k]


class Replicability(NamedTuple):
    nonreplicable: bool
    direction: Optional[np.ndarray]


def check_nonreplicability(model: MarketModel) -> Replicability:
    """True iff no nonzero q makes q.f replicable; otherwise return such a q.

    q.f is replicable iff E_Q[q.f] is the same for every martingale measure,
    i.e. q is orthogonal to the affine hull of the price polytope.
    """
    P = price_set(model).vertices
    n = model.n_derivatives
    if n == 0:
        return Replicability(True, None)
    D = P[1:] - P[0] if P.shape[0] > 1 else np.zeros((0, n))
    N = nullspace(D, rtol=1e-9) if D.shape[0] else np.eye(n)
    if N.shape[1] == 0:
        return Replicability(True, None)
    q = N[:, 0]
    lead = q[np.flatnonzero(np.abs(q) > 1e-12)[0]]
    return Replicability(False, q / np.sign(lead))
