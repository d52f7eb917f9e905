"""Primal problems: u(x, q), u~(x, p) and w(x).

Every primal problem here is "maximize E[U(base + A z)]" for some base
vector and matrix A over free variables z. Smooth (Inada) utilities go
through a damped Newton method that keeps terminal wealth strictly positive;
piecewise-linear utilities go through an exact LP in segment form.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ArbitrageError, DimensionError
from .geometry import check_nonreplicability, cone_K_contains, price_set
from .lp import INFEASIBLE, UNBOUNDED, LinearProgram, nullspace, solve_lp
from .market import MarketModel
from .utility import PiecewiseLinearUtility, Utility

log = logging.getLogger(__name__)

INTERIOR = "interior"
BOUNDARY = "boundary"
INFEASIBLE_STATUS = "infeasible"
INFINITE = "infinite"

NEWTON_MAX_ITER = 200
GRAD_RTOL = 8 * np.finfo(float).eps
EPS = np.finfo(float).eps


@dataclass
class PrimalSolution:
    """Optimizer and value of a primal problem.

    ``marginal`` is the derivative of the value in initial capital, read off
    the optimizer as E[U'(g)] (the budget multiplier). ``marginal_q`` is the
    derivative in the static position for the random-endowment problem.
    """

    value: float
    wealth: np.ndarray
    strategy: np.ndarray
    q: np.ndarray
    marginal: float
    status: str
    marginal_q: np.ndarray = field(default_factory=lambda: np.zeros(0))
    nonunique: bool = False
    iterations: int = 0
    note: str = ""

    @property
    def dx(self) -> float:
        return self.marginal


# --- smooth path ---------------------------------------------------------------------------

def _objective(U, P, g):
    with np.errstate(divide="ignore", invalid="ignore"):
        return float(P @ np.asarray(U.value(g)))


def newton_maximize(U: Utility, P, base, A, z0=None, max_iter: int = NEWTON_MAX_ITER):
    """Maximize sum_w P_w U(base_w + (A z)_w) from a strictly feasible z0.

    Steps are minimum-norm solutions of the Newton system, so when A has a
    null space the iterates stay in the row space of A. Returns
    (z, iterations, converged).
    """
    P = np.asarray(P, dtype=float)
    base = np.asarray(base, dtype=float)
    A = np.asarray(A, dtype=float).reshape(base.size, -1)
    z = np.zeros(A.shape[1]) if z0 is None else np.asarray(z0, dtype=float).copy()
    g = base + A @ z
    if np.any(g <= 0):
        raise ValueError("starting point is not strictly feasible")
    if A.shape[1] == 0:
        return z, 0, True
    f = _objective(U, P, g)
    grad0 = None
    for it in range(1, max_iter + 1):
        du = np.asarray(U.marginal(g))
        d2u = np.asarray(U.curvature(g))
        grad = A.T @ (P * du)
        gnorm = float(np.linalg.norm(grad))
        if grad0 is None:
            grad0 = max(gnorm, 1.0)
        # rounding floor: size of the summands plus the error of g = base + A z
        # propagated through U''
        absA = np.abs(A)
        dg = EPS * (np.abs(base) + absA @ np.abs(z))
        floor = float(np.linalg.norm(absA.T @ (P * np.abs(du))))
        carried = float(np.linalg.norm(absA.T @ (P * np.abs(d2u) * dg)))
        if gnorm <= GRAD_RTOL * floor + carried:
            return z, it - 1, True
        hess = A.T @ ((-P * d2u)[:, None] * A)
        step = np.linalg.lstsq(hess, grad, rcond=1e-14)[0]
        dec = float(grad @ step)
        if dec <= 1e-24 * (1.0 + abs(f)):
            return z, it - 1, True
        t = 1.0
        Astep = A @ step
        while np.any(g + t * Astep <= 0):
            t *= 0.5
        # below the rounding level of f, compare gradient norms instead
        flat = dec <= 64 * EPS * (1.0 + abs(f))
        accepted = False
        for _ in range(80):
            g_new = g + t * Astep
            f_new = _objective(U, P, g_new)
            if f_new >= f + 0.25 * t * dec or (t < 1e-6 and f_new >= f):
                accepted = True
                break
            if flat and np.linalg.norm(A.T @ (P * np.asarray(U.marginal(g_new)))) < gnorm:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # no ascent available at working precision
            return z, it, gnorm <= 1e-7 * grad0
        z = z + t * step
        g = base + A @ z
        f = f_new
    return z, max_iter, False


def gradient_fallback(U: Utility, P, base, A, z, max_iter: int = 20_000):
    """Backtracking gradient ascent used when Newton does not converge."""
    g = base + A @ z
    f = _objective(U, P, g)
    for it in range(max_iter):
        grad = A.T @ (P * np.asarray(U.marginal(g)))
        if np.linalg.norm(grad) < 1e-10:
            return z, it
        t = 1.0
        while True:
            g_new = base + A @ (z + t * grad)
            if np.all(g_new > 0):
                f_new = _objective(U, P, g_new)
                if f_new >= f + 0.5 * t * float(grad @ grad):
                    break
            t *= 0.5
            if t < 1e-20:
                return z, it
        z = z + t * grad
        g, f = g_new, f_new
    return z, max_iter


def interior_point(base, A, cap: float = 1.0):
    """max t s.t. base + A z >= t, t <= cap. Returns (t, z)."""
    base = np.asarray(base, dtype=float)
    A = np.asarray(A, dtype=float).reshape(base.size, -1)
    k = A.shape[1]
    c = np.zeros(k + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-A, np.ones((base.size, 1))])
    A_ub = np.vstack([A_ub, np.eye(1, k + 1, k)])
    b_ub = np.concatenate([base, [cap]])
    res = solve_lp(LinearProgram(c, A_ub=A_ub, b_ub=b_ub, lower=np.full(k + 1, -np.inf)))
    if res.status == INFEASIBLE:
        return -np.inf, np.zeros(k)
    return float(res.x[-1]), res.x[:k]


def _smooth_maximize(U, P, base, A):
    """Solve, handling the boundary of the feasible cone. Returns (z, g, status, iters, note)."""
    scale = 1.0 + float(np.max(np.abs(base)))
    t, z0 = interior_point(base, A, cap=scale)
    tol = 1e-11 * scale
    if t > tol:
        z, iters, ok = newton_maximize(U, P, base, A, z0)
        note = ""
        if not ok:
            log.warning("Newton did not converge in %d iterations; using gradient ascent", iters)
            z, more = gradient_fallback(U, P, base, A, z)
            iters += more
            note = "newton-fallback"
        return z, base + A @ z, INTERIOR, iters, note
    if t < -tol:
        return None, None, INFEASIBLE_STATUS, 0, ""
    # boundary of K: some states are pinned at zero wealth by every feasible strategy
    N_states = base.size
    forced = []
    for w in range(N_states):
        res = solve_lp(LinearProgram(-A[w], A_ub=-A, b_ub=base, lower=np.full(A.shape[1], -np.inf)))
        top = base[w] - res.value if res.status != UNBOUNDED else np.inf
        if top <= tol:
            forced.append(w)
    forced = np.array(forced, dtype=int)
    free = np.setdiff1d(np.arange(N_states), forced)
    Zf = A[forced]
    zp = np.linalg.lstsq(Zf, -base[forced], rcond=None)[0] if forced.size else np.zeros(A.shape[1])
    Nb = nullspace(Zf) if forced.size else np.eye(A.shape[1])
    if U.u_zero == -np.inf:
        return zp, base + A @ zp, BOUNDARY, 0, "utility is -inf at zero wealth"
    if free.size == 0:
        return zp, np.maximum(base + A @ zp, 0.0), BOUNDARY, 0, ""
    base_r = base[free] + A[free] @ zp
    A_r = A[free] @ Nb
    P_r = P[free]
    t_r, s0 = interior_point(base_r, A_r, cap=scale)
    s, iters, _ = newton_maximize(U, P_r, base_r, A_r, s0)
    z = zp + Nb @ s
    g = base + A @ z
    g[forced] = 0.0
    return z, g, BOUNDARY, iters, ""


# --- piecewise-linear path ----------------------------------------------------------------

def lp_maximize(U: PiecewiseLinearUtility, P, base, A):
    """Exact LP for a piecewise-linear utility.

    Terminal wealth is written as the sum of its fills of the utility's
    segments; with decreasing slopes the LP fills them in order. Returns
    (status, z, g, value, marginal) where marginal is d value / d base
    summed over states.
    """
    P = np.asarray(P, dtype=float)
    base = np.asarray(base, dtype=float)
    A = np.asarray(A, dtype=float).reshape(base.size, -1)
    N, k = A.shape
    s = np.asarray(U.slopes, dtype=float)
    S = s.size
    lengths = np.diff(U.knots)
    nd = N * S
    c = np.concatenate([-(P[:, None] * s[None, :]).ravel(), np.zeros(k)])
    A_eq = np.zeros((N, nd + k))
    for w in range(N):
        A_eq[w, w * S:(w + 1) * S] = 1.0
    A_eq[:, nd:] = -A
    rows, rhs = [], []
    for w in range(N):
        for j in range(S - 1):
            r = np.zeros(nd + k)
            r[w * S + j] = 1.0
            rows.append(r)
            rhs.append(lengths[j])
    lower = np.concatenate([np.zeros(nd), np.full(k, -np.inf)])
    res = solve_lp(LinearProgram(c, A_eq, base, np.array(rows).reshape(-1, nd + k), np.array(rhs), lower))
    if res.status == INFEASIBLE:
        return INFEASIBLE_STATUS, None, None, -np.inf, np.nan
    if res.status == UNBOUNDED:
        return INFINITE, None, None, np.inf, np.nan
    z = res.x[nd:]
    g = res.x[:nd].reshape(N, S).sum(axis=1)
    value = float(P @ np.asarray(U.value(g)))
    status = BOUNDARY if np.any(g <= 1e-12) else INTERIOR
    return status, z, g, value, -float(np.sum(res.dual_eq))


# --- public problems -----------------------------------------------------------------------

def _split(model, z, with_q):
    n = model.n_derivatives if with_q else 0
    K, d = model.strategy_shape
    return z[:n], z[n:].reshape(K, d)


def _solve(model: MarketModel, U: Utility, base, A, with_q: bool, q_fixed=None) -> PrimalSolution:
    P = model.probs
    n = model.n_derivatives
    K, d = model.strategy_shape
    if isinstance(U, PiecewiseLinearUtility):
        status, z, g, value, marg = lp_maximize(U, P, base, A)
        if z is None:
            return PrimalSolution(value, np.full(model.n_states, np.nan), np.zeros((K, d)),
                                  np.full(n, np.nan) if with_q else np.asarray(q_fixed), np.nan, status)
        qv, H = _split(model, z, with_q)
        return PrimalSolution(value, g, H, qv if with_q else np.asarray(q_fixed, dtype=float), marg, status,
                              note="lp")
    if not U.inada:
        raise ValueError(f"utility {U} is not supported by the smooth solver")
    z, g, status, iters, note = _smooth_maximize(U, P, base, A)
    if status == INFEASIBLE_STATUS:
        return PrimalSolution(-np.inf, np.full(model.n_states, np.nan), np.zeros((K, d)),
                              np.full(n, np.nan) if with_q else np.asarray(q_fixed), np.nan, status)
    qv, H = _split(model, z, with_q)
    with np.errstate(divide="ignore"):
        du = np.asarray(U.marginal(np.where(g > 0, g, np.nan)))
    du = np.where(g > 0, du, np.inf)
    value = _objective(U, P, g)
    marg = float(P @ du)
    with np.errstate(invalid="ignore"):
        marg_q = model.payoffs @ (P * du)
    return PrimalSolution(value, g, H, qv if with_q else np.asarray(q_fixed, dtype=float), marg, status,
                          marginal_q=marg_q, iterations=iters, note=note)


def solve_u(model: MarketModel, U: Utility, x: float, q) -> PrimalSolution:
    """u(x, q): best expected utility of x + (H.S)_T + q.f over strategies H."""
    q = np.atleast_1d(np.asarray(q, dtype=float)).ravel()
    if q.size != model.n_derivatives:
        raise DimensionError(f"q has {q.size} entries, expected {model.n_derivatives}")
    K, d = model.strategy_shape
    if not cone_K_contains(model, x, q):
        return PrimalSolution(-np.inf, np.full(model.n_states, np.nan), np.zeros((K, d)), q, np.nan,
                              INFEASIBLE_STATUS, note="(x, q) outside the feasible cone")
    base = float(x) + model.payoffs.T @ q
    return _solve(model, U, base, model.gains, with_q=False, q_fixed=q)


def solve_u_tilde(model: MarketModel, U: Utility, x: float, p, check_price: bool = True) -> PrimalSolution:
    """u~(x, p): joint optimization over the static position q and strategy H."""
    if x <= 0:
        raise ValueError("initial capital must be positive")
    p = np.atleast_1d(np.asarray(p, dtype=float)).ravel()
    n = model.n_derivatives
    if p.size != n:
        raise DimensionError(f"p has {p.size} entries, expected {n}")
    if check_price and n and p not in price_set(model):
        raise ArbitrageError(f"price {p.tolist()} is not arbitrage-free")
    A = np.hstack([model.payoffs.T - p[None, :], model.gains])
    base = np.full(model.n_states, float(x))
    sol = _solve(model, U, base, A, with_q=True)
    if n and not check_nonreplicability(model).nonreplicable:
        sol.nonunique = True
    if sol.status == INFINITE:
        raise ArbitrageError(f"value is infinite at price {p.tolist()}")
    return sol


def stock_only_value(model: MarketModel, U: Utility, x: float) -> PrimalSolution:
    """w(x): optimal investment without the contingent claims."""
    return solve_u(model, U, x, np.zeros(model.n_derivatives))
