"""Dense linear programming and small-polytope utilities.

Everything geometric in the package (superreplication, price sets, the
feasible cone and its polar, the largest feasible position) reduces to small
dense LPs or to vertex enumeration of low-dimensional polytopes. The solver is
a two-phase tableau simplex with Bland's rule, which cannot cycle.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionError, InfeasibleError, NumericalError, UnboundedError

FEAS_TOL = 1e-9
MAX_VERTEX_DIM = 12

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass
class LinearProgram:
    """minimize c.x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  x >= lower.

    ``lower`` entries may be ``-inf`` (free variable). Omitted row blocks are
    treated as empty; omitted ``lower`` means x >= 0.
    """

    c: np.ndarray
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    A_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    lower: Optional[np.ndarray] = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_eq, self.b_eq = _rows(self.A_eq, self.b_eq, n, "equality")
        self.A_ub, self.b_ub = _rows(self.A_ub, self.b_ub, n, "inequality")
        if self.lower is None:
            self.lower = np.zeros(n)
        self.lower = np.asarray(self.lower, dtype=float).ravel()
        if self.lower.size != n:
            raise DimensionError(f"lower has {self.lower.size} entries, expected {n}")
        if np.any(np.isposinf(self.lower)) or np.any(np.isnan(self.lower)):
            raise DimensionError("lower bounds must be finite or -inf")

    @property
    def n_vars(self) -> int:
        return self.c.size


def _rows(A, b, n, kind):
    if A is None or (np.size(A) == 0 and (b is None or np.size(b) == 0)):
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if A.shape[1] != n or A.shape[0] != b.size:
        raise DimensionError(f"{kind} block has shape {A.shape} with rhs {b.size}, expected (*, {n})")
    if not np.all(np.isfinite(b)):
        raise DimensionError(f"{kind} rhs must be finite")
    return A, b


@dataclass
class LpResult:
    """Outcome of :func:`solve_lp`.

    ``dual_eq`` / ``dual_ub`` are sensitivities of the optimal value with
    respect to the right-hand sides (so ``dual_ub <= 0`` for a minimization).
    """

    status: str
    x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    value: float = float("nan")
    dual_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dual_ub: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class _Tableau:
    """B^{-1}[A | b] for a standard-form problem with b >= 0."""

    def __init__(self, A, b, tol, max_iter):
        self.tol = tol
        self.max_iter = max_iter
        self.iterations = 0
        m, n = A.shape
        self.n = n
        self.T = np.hstack([A, np.eye(m), b[:, None]])
        self.basis = list(range(n, n + m))

    def pivot(self, r, j):
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.basis[r] = j

    def run(self, cost, allowed):
        """Bland's-rule simplex on columns ``allowed``; returns False if unbounded."""
        cost = np.asarray(cost, dtype=float)
        scale = max(1.0, float(np.max(np.abs(cost))) if cost.size else 1.0)
        rc_tol = 1e-13 * scale
        while True:
            if self.iterations >= self.max_iter:
                raise NumericalError(f"simplex exceeded {self.max_iter} pivots")
            cb = cost[self.basis]
            body = self.T[:, :-1]
            reduced = cost - cb @ body
            entering = None
            for j in allowed:
                if reduced[j] < -rc_tol:
                    entering = j
                    break
            if entering is None:
                return True
            col = body[:, entering]
            rhs = self.T[:, -1]
            best = None
            for i in range(col.size):
                if col[i] > self.tol:
                    ratio = rhs[i] / col[i]
                    key = (ratio, self.basis[i])
                    if best is None or key[0] < best[0][0] - 1e-14 or (
                        abs(key[0] - best[0][0]) <= 1e-14 and key[1] < best[0][1]
                    ):
                        best = (key, i)
            if best is None:
                return False
            self.pivot(best[1], entering)
            self.iterations += 1


def _simplex_standard(c, A, b, tol=1e-11, max_iter=50_000):
    """min c.x, A x = b, x >= 0 with b >= 0. Returns (status, x, y, kept_rows, iters)."""
    m, n = A.shape
    if m == 0:
        if np.any(c < -1e-13):
            return UNBOUNDED, None, None, [], 0
        return OPTIMAL, np.zeros(n), np.zeros(0), [], 0
    tab = _Tableau(A, b, tol, max_iter)
    phase1 = np.concatenate([np.zeros(n), np.ones(m)])
    tab.run(phase1, range(n + m))
    infeas = float(np.sum(tab.T[:, -1][np.array(tab.basis) >= n]))
    if infeas > FEAS_TOL * (1.0 + float(np.max(np.abs(b)))):
        return INFEASIBLE, None, None, [], tab.iterations
    # drive artificials out of the basis; rows where that fails are redundant
    rows = list(range(m))
    r = 0
    while r < len(tab.basis):
        if tab.basis[r] >= n:
            cand = [j for j in range(n) if abs(tab.T[r, j]) > 1e-9]
            if cand:
                tab.pivot(r, cand[0])
                r += 1
            else:
                tab.T = np.delete(tab.T, r, axis=0)
                del tab.basis[r]
                del rows[r]
        else:
            r += 1
    cost = np.concatenate([c, np.zeros(m)])
    bounded = tab.run(cost, range(n))
    if not bounded:
        return UNBOUNDED, None, None, rows, tab.iterations
    basis = np.array(tab.basis, dtype=int)
    x = np.zeros(n)
    if basis.size:
        B = A[np.ix_(rows, basis)]
        try:
            xb = np.linalg.solve(B, b[rows])
            y_kept = np.linalg.solve(B.T, c[basis])
        except np.linalg.LinAlgError:
            xb = tab.T[:, -1]
            y_kept = np.linalg.lstsq(B.T, c[basis], rcond=None)[0]
        xb[np.abs(xb) < 1e-15] = 0.0
        x[basis] = np.maximum(xb, 0.0)
    else:
        y_kept = np.zeros(0)
    y = np.zeros(m)
    y[rows] = y_kept
    return OPTIMAL, x, y, rows, tab.iterations


def solve_lp(lp: LinearProgram, max_iter: int = 50_000) -> LpResult:
    """Solve ``lp`` with a dense two-phase simplex (Bland's rule)."""
    n = lp.n_vars
    finite = np.isfinite(lp.lower)
    shift = np.where(finite, lp.lower, 0.0)
    # column map: finite-lb var -> 1 col, free var -> (+, -) pair
    cols = []
    for j in range(n):
        cols.append((j, 1.0))
        if not finite[j]:
            cols.append((j, -1.0))
    ns = len(cols)
    M = np.zeros((n, ns))
    for k, (j, s) in enumerate(cols):
        M[j, k] = s
    me, mu = lp.A_eq.shape[0], lp.A_ub.shape[0]
    A = np.zeros((me + mu, ns + mu))
    A[:me, :ns] = lp.A_eq @ M
    A[me:, :ns] = lp.A_ub @ M
    A[me:, ns:] = np.eye(mu)
    b = np.concatenate([lp.b_eq - lp.A_eq @ shift, lp.b_ub - lp.A_ub @ shift])
    sign = np.where(b < 0, -1.0, 1.0)
    A *= sign[:, None]
    b = b * sign
    c = np.concatenate([M.T @ lp.c, np.zeros(mu)])
    status, xs, ys, _, iters = _simplex_standard(c, A, b, max_iter=max_iter)
    if status != OPTIMAL:
        return LpResult(status=status, iterations=iters)
    x = M @ xs[:ns] + shift
    y = ys * sign
    return LpResult(
        status=OPTIMAL,
        x=x,
        value=float(lp.c @ x),
        dual_eq=y[:me],
        dual_ub=y[me:],
        iterations=iters,
    )


def min_residual(A_eq, b_eq) -> tuple[float, np.ndarray]:
    """Smallest L1 residual |A x - b|_1 over x >= 0, with the minimizer."""
    A_eq = np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.asarray(b_eq, dtype=float).ravel()
    m, n = A_eq.shape
    c = np.concatenate([np.zeros(n), np.ones(2 * m)])
    A = np.hstack([A_eq, np.eye(m), -np.eye(m)])
    res = solve_lp(LinearProgram(c, A_eq=A, b_eq=b_eq))
    return res.value, res.x[:n]


def strict_feasibility(A_eq, b_eq) -> tuple[float, np.ndarray]:
    """Max-min slack of {A x = b, x >= 0}.

    Solves max t s.t. A x = b, x >= t, t <= 1. The value is positive iff the
    system has a strictly positive solution; the witness attains it.
    Raises :class:`InfeasibleError` when the system has no nonnegative
    solution at all, so an empty system is distinguishable from one whose
    solutions all touch the boundary (value 0).
    """
    A_eq = np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.asarray(b_eq, dtype=float).ravel()
    m, n = A_eq.shape
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-np.eye(n), np.ones((n, 1))])
    A_ub = np.vstack([A_ub, np.eye(1, n + 1, n)])
    b_ub = np.concatenate([np.zeros(n), [1.0]])
    lower = np.concatenate([np.zeros(n), [-np.inf]])
    res = solve_lp(LinearProgram(c, np.hstack([A_eq, np.zeros((m, 1))]), b_eq, A_ub, b_ub, lower))
    if res.status == INFEASIBLE:
        raise InfeasibleError("equality system has no nonnegative solution")
    t = res.x[-1]
    return max(float(t), 0.0), res.x[:n]


@dataclass
class Polytope:
    """Halfspace description {x : normals @ x <= offsets}."""

    normals: np.ndarray
    offsets: np.ndarray
    _vertices: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.offsets = np.asarray(self.offsets, dtype=float).ravel()
        self.normals = np.asarray(self.normals, dtype=float).reshape(self.offsets.size, -1)

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    def contains(self, x, tol: float = FEAS_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(self.normals @ x <= self.offsets + tol * (1.0 + np.abs(self.offsets))))

    def is_bounded(self) -> bool:
        d = self.dim
        for i in range(d):
            for s in (1.0, -1.0):
                res = solve_lp(LinearProgram(-s * np.eye(d)[i], A_ub=self.normals,
                                             b_ub=self.offsets, lower=np.full(d, -np.inf)))
                if res.status == UNBOUNDED:
                    return False
                if res.status == INFEASIBLE:
                    return True
        return True

    @property
    def vertices(self) -> np.ndarray:
        if self._vertices is None:
            self._vertices = enumerate_vertices(self)
        return self._vertices


def enumerate_vertices(poly: Polytope, tol: float = FEAS_TOL, max_dim: int = MAX_VERTEX_DIM) -> np.ndarray:
    """Extreme points of a bounded polytope by basis enumeration.

    Every ``dim``-subset of constraints with a nonsingular normal block is
    solved; feasible solutions are kept and deduplicated. The rows of the
    returned array are sorted lexicographically.
    """
    d = poly.dim
    if d > max_dim:
        raise DimensionError(f"vertex enumeration capped at {max_dim} dimensions, got {d}")
    A, c = poly.normals, poly.offsets
    if d == 0:
        if np.all(c >= -tol):
            return np.zeros((1, 0))
        return np.zeros((0, 0))
    if not poly.is_bounded():
        raise UnboundedError("polytope is unbounded")
    found: list[np.ndarray] = []
    for idx in itertools.combinations(range(A.shape[0]), d):
        sub = A[list(idx)]
        if abs(np.linalg.det(sub)) < 1e-12 * max(1.0, np.max(np.abs(sub))) ** d:
            continue
        try:
            v = np.linalg.solve(sub, c[list(idx)])
        except np.linalg.LinAlgError:
            continue
        if not np.all(A @ v <= c + tol * (1.0 + np.abs(c))):
            continue
        if any(np.max(np.abs(v - w)) <= 1e-8 * (1.0 + np.max(np.abs(w))) for w in found):
            continue
        found.append(v)
    if not found:
        return np.zeros((0, d))
    V = np.array(found)
    V[np.abs(V) < 1e-14] = 0.0
    order = np.lexsort(V.T[::-1])
    return V[order]


def nullspace(A, rtol: float = 1e-11) -> np.ndarray:
    """Orthonormal basis (columns) of the null space of A."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[1]
    if A.shape[0] == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(A)
    rank = int(np.sum(s > rtol * max(1.0, s[0] if s.size else 0.0)))
    return vt[rank:].T.copy()


def standard_form_vertices(A_eq, b_eq, tol: float = FEAS_TOL) -> np.ndarray:
    """Vertices of {x >= 0 : A_eq x = b_eq}, computed in null-space coordinates."""
    A_eq = np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.asarray(b_eq, dtype=float).ravel()
    x0 = np.linalg.lstsq(A_eq, b_eq, rcond=None)[0]
    if np.max(np.abs(A_eq @ x0 - b_eq), initial=0.0) > 1e-9 * (1.0 + np.max(np.abs(b_eq), initial=0.0)):
        return np.zeros((0, A_eq.shape[1]))
    N = nullspace(A_eq)
    # x = x0 + N t >= 0  <=>  -N t <= x0
    poly = Polytope(-N, x0)
    T = enumerate_vertices(poly, tol=tol)
    if T.size == 0 and T.shape[0] == 0:
        return np.zeros((0, A_eq.shape[1]))
    X = x0[None, :] + T @ N.T
    X[np.abs(X) < 1e-13] = 0.0
    X = np.maximum(X, 0.0)
    order = np.lexsort(X.T[::-1])
    return X[order]
