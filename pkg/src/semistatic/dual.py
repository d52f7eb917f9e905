"""Dual problems: v(y, r), v~(y, p) = v(y, y p) and w~(y).

The dual variable is a nonnegative density h over terminal nodes with
E[h] = y, E[h f] = r and h P a (scaled) martingale measure. Gradients of v
are the multipliers of the two moment constraints.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import DimensionError, InfeasibleError, NumericalError
from .geometry import cone_L_contains
from .lp import LinearProgram, nullspace, solve_lp, strict_feasibility
from .market import MarketModel
from .utility import PiecewiseLinearUtility, Utility

OPTIMAL = "optimal"
INFEASIBLE_STATUS = "infeasible"
EPS = np.finfo(float).eps


@dataclass
class DualSolution:
    value: float
    density: np.ndarray
    grad_y: float
    grad_r: np.ndarray
    status: str
    y: float = float("nan")
    r: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0

    def measure_of(self, model: MarketModel) -> np.ndarray:
        """Normalized martingale measure h P / E[h]."""
        w = model.probs * self.density
        return w / w.sum()


@dataclass
class TildeDual(DualSolution):
    """v~(y, p) together with its derivatives in y and p."""

    p: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dy: float = float("nan")
    grad_p: np.ndarray = field(default_factory=lambda: np.zeros(0))


def constraint_system(model: MarketModel, y: float, r=None):
    """Rows (mass, payoff moments, martingale) and right-hand side. ``r=None`` drops the payoff rows."""
    P = model.probs
    rows = [P[None, :]]
    rhs = [np.array([float(y)])]
    if r is not None:
        rows.append(model.payoffs * P[None, :])
        rhs.append(np.atleast_1d(np.asarray(r, dtype=float)))
    rows.append((model.gains * P[:, None]).T)
    rhs.append(np.zeros(model.gains.shape[1]))
    return np.vstack(rows), np.concatenate(rhs)


def newton_minimize(U: Utility, P, C, b, h0, max_iter: int = 200, tol: float = 1e-13):
    """Minimize sum P V(h) subject to C h = b, h > 0.

    Starts from a strictly positive feasible point when one exists (largest
    minimum entry, by LP) and runs feasible Newton with an Armijo search on
    the objective. Falls back to infeasible-start Newton on the KKT residual.
    Returns (h, iterations).
    """
    try:
        t, h_feas = strict_feasibility(C, b)
    except InfeasibleError:
        t = 0.0
    if t > 1e-12 * (1.0 + float(np.max(np.abs(b)))):
        return _feasible_newton(U, P, C, h_feas, max_iter)
    return _infeasible_newton(U, P, C, b, h0, max_iter, tol)


def _objective(U, P, h):
    return float(P @ np.asarray(U.conjugate(h)))


def _feasible_newton(U, P, C, h, max_iter):
    # reduced Newton in a basis of ker C keeps every iterate exactly feasible
    h = np.asarray(h, dtype=float).copy()
    N = nullspace(C)
    if N.shape[1] == 0:
        return h, 0
    f = _objective(U, P, h)
    for it in range(1, max_iter + 1):
        g = N.T @ (P * np.asarray(U.conjugate_prime(h)))
        H = N.T @ ((P * np.asarray(U.conjugate_curvature(h)))[:, None] * N)
        dh = N @ -np.linalg.solve(H, g)
        dec = float(-g @ (N.T @ dh))
        if dec <= 1e-26 * (1.0 + abs(f)) or np.max(np.abs(dh) / h) <= 1e-15:
            return h, it - 1
        t = 1.0
        while np.any(h + t * dh <= 0):
            t *= 0.5
        flat = dec <= 64 * EPS * (1.0 + abs(f))
        gnorm = float(np.linalg.norm(g))
        for _ in range(80):
            f_new = _objective(U, P, h + t * dh)
            if f_new <= f - 0.25 * t * dec:
                break
            if flat and np.linalg.norm(N.T @ (P * np.asarray(U.conjugate_prime(h + t * dh)))) < gnorm:
                break
            t *= 0.5
        else:
            # no descent left at working precision
            if dec <= 1e-14 * (1.0 + abs(f)):
                return h, it
            raise NumericalError(f"dual line search failed (decrement {dec:.3g})")
        h = h + t * dh
        f = f_new
    raise NumericalError(f"dual Newton did not converge in {max_iter} iterations")


def _infeasible_newton(U, P, C, b, h0, max_iter, tol):
    h = np.asarray(h0, dtype=float).copy()
    nu = np.zeros(C.shape[0])
    scale = 1.0 + float(np.max(np.abs(b)))

    def residual(h, nu):
        rd = P * np.asarray(U.conjugate_prime(h)) + C.T @ nu
        rp = C @ h - b
        return rd, rp

    for it in range(1, max_iter + 1):
        rd, rp = residual(h, nu)
        norm = np.sqrt(rd @ rd + rp @ rp)
        gscale = 1.0 + float(np.max(np.abs(P * np.asarray(U.conjugate_prime(h)))))
        if np.max(np.abs(rp)) <= tol * scale and np.max(np.abs(rd)) <= tol * gscale:
            return h, it - 1
        dinv = 1.0 / (P * np.asarray(U.conjugate_curvature(h)))
        S = (C * dinv[None, :]) @ C.T
        dnu = np.linalg.lstsq(S, rp - C @ (dinv * rd), rcond=1e-14)[0]
        dh = -dinv * (rd + C.T @ dnu)
        t = 1.0
        while np.any(h + t * dh <= 0):
            t *= 0.5
        for _ in range(80):
            rd2, rp2 = residual(h + t * dh, nu + t * dnu)
            if np.sqrt(rd2 @ rd2 + rp2 @ rp2) <= (1 - 0.01 * t) * norm:
                break
            t *= 0.5
        else:
            return h, it
        h = h + t * dh
        nu = nu + t * dnu
    raise NumericalError(f"dual Newton did not converge in {max_iter} iterations")


def _final_multipliers(U, P, C, h):
    # C^T nu = -grad F, least squares over the (possibly redundant) rows
    return np.linalg.lstsq(C.T, -P * np.asarray(U.conjugate_prime(h)), rcond=1e-12)[0]


def lp_minimize(U: PiecewiseLinearUtility, P, C, b):
    """Exact LP for the conjugate of a piecewise-linear utility.

    V is convex piecewise linear on [s_last, inf) with slopes -knot_j on
    consecutive slope intervals; h is written as s_last plus segment fills.
    Returns (status, h, value, multipliers as d value / d b).
    """
    s = np.asarray(U.slopes, dtype=float)
    kn = U.knots
    m = s.size - 1
    h_min = s[-1]
    seg_len = [s[j - 1] - s[j] for j in range(m, 0, -1)]  # finite segments
    seg_slope = [-kn[j] for j in range(m, 0, -1)] + [-kn[0]]
    S = len(seg_slope)
    N = P.size
    c = (P[:, None] * np.array(seg_slope)[None, :]).ravel()
    A_eq = np.zeros((C.shape[0], N * S))
    for w in range(N):
        A_eq[:, w * S:(w + 1) * S] = C[:, [w]]
    rhs = b - h_min * C.sum(axis=1)
    rows, ub = [], []
    for w in range(N):
        for j, L in enumerate(seg_len):
            r = np.zeros(N * S)
            r[w * S + j] = 1.0
            rows.append(r)
            ub.append(L)
    res = solve_lp(LinearProgram(c, A_eq, rhs, np.array(rows).reshape(-1, N * S), np.array(ub)))
    if res.status != "optimal":
        return INFEASIBLE_STATUS, None, np.inf, None
    h = h_min + res.x.reshape(N, S).sum(axis=1)
    return OPTIMAL, h, float(P @ np.asarray(U.conjugate(h))), res.dual_eq


def _solve(model: MarketModel, U: Utility, y: float, r, C, b) -> DualSolution:
    P = model.probs
    n_mom = 0 if r is None else np.atleast_1d(r).size
    r_arr = np.zeros(0) if r is None else np.atleast_1d(np.asarray(r, dtype=float))
    if isinstance(U, PiecewiseLinearUtility):
        status, h, value, dual = lp_minimize(U, P, C, b)
        if status != OPTIMAL:
            return DualSolution(np.inf, np.full(model.n_states, np.nan), np.nan,
                                np.full(n_mom, np.nan), INFEASIBLE_STATUS, y, r_arr)
        return DualSolution(value, h, float(dual[0]), dual[1:1 + n_mom], OPTIMAL, y, r_arr)
    if y <= 0:
        raise ValueError("smooth dual requires y > 0")
    h, iters = newton_minimize(U, P, C, b, np.full(model.n_states, float(y)))
    nu = _final_multipliers(U, P, C, h)
    value = float(P @ np.asarray(U.conjugate(h)))
    return DualSolution(value, h, float(-nu[0]), -nu[1:1 + n_mom], OPTIMAL, y, r_arr, iters)


def solve_v(model: MarketModel, U: Utility, y: float, r) -> DualSolution:
    """v(y, r) = min E[V(h)] over nonnegative martingale densities with E[h] = y, E[h f] = r."""
    r = np.atleast_1d(np.asarray(r, dtype=float)).ravel()
    if r.size != model.n_derivatives:
        raise DimensionError(f"r has {r.size} entries, expected {model.n_derivatives}")
    if not cone_L_contains(model, y, r):
        return DualSolution(np.inf, np.full(model.n_states, np.nan), np.nan, np.full(r.size, np.nan),
                            INFEASIBLE_STATUS, y, r)
    C, b = constraint_system(model, y, r)
    return _solve(model, U, y, r, C, b)


def solve_v_tilde(model: MarketModel, U: Utility, y: float, p) -> TildeDual:
    """v~(y, p) = v(y, y p), with d/dy = (d_y v + p.grad_r v) and grad_p = y grad_r v."""
    p = np.atleast_1d(np.asarray(p, dtype=float)).ravel()
    sol = solve_v(model, U, y, y * p)
    out = TildeDual(**sol.__dict__, p=p)
    out.dy = sol.grad_y + float(p @ sol.grad_r)
    out.grad_p = y * sol.grad_r
    return out


def dual_w_tilde(model: MarketModel, U: Utility, y: float) -> tuple[float, np.ndarray, DualSolution]:
    """w~(y) = min over p of v(y, y p); returns (value, minimizing p, solution)."""
    C, b = constraint_system(model, y, None)
    sol = _solve(model, U, y, None, C, b)
    if sol.status != OPTIMAL:
        return np.inf, np.full(model.n_derivatives, np.nan), sol
    p_star = model.payoffs @ (model.probs * sol.density) / y
    sol.r = y * p_star
    return sol.value, p_star, sol


def conjugate_bound(model: MarketModel, U: Utility, x: float, p, y_bracket=(1e-8, 1e8)) -> tuple[float, float]:
    """min over y > 0 of v~(y, p) + x y, with the minimizing y.

    v~(., p) is convex, so the minimizer is the root of d/dy v~ + x.
    """
    def slope(logy):
        return solve_v_tilde(model, U, np.exp(logy), p).dy + x

    lo, hi = np.log(y_bracket[0]), np.log(y_bracket[1])
    a, b = np.log(1.0 / x) - 1.0, np.log(1.0 / x) + 1.0
    while slope(a) > 0 and a > lo:
        a -= 2.0
    while slope(b) < 0 and b < hi:
        b += 2.0
    ly = brentq(slope, a, b, xtol=1e-14, rtol=1e-15, maxiter=200)
    y = float(np.exp(ly))
    return solve_v_tilde(model, U, y, p).value + x * y, y
