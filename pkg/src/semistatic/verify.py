"""Numerical checks of the structural properties of u~, v~, m and the price set.

Each check yields a :class:`VerificationReport` of named residuals; a check
passes iff its residual is at most its tolerance. Strict inequalities are
encoded with a negative tolerance (e.g. "a - b <= -1e-12").
"""
from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .dual import conjugate_bound, solve_v_tilde
from .errors import DimensionError, SemistaticError
from .geometry import (
    check_nonreplicability,
    fiber_vertices,
    largest_feasible_position,
    price_set,
)
from .instances import binary_claim_market
from .lp import Polytope, enumerate_vertices
from .market import MarketModel
from .primal import solve_u, solve_u_tilde
from .utility import PiecewiseLinearUtility, PowerUtility, Utility, kinked_utility

PASS, FAIL, SKIP = "pass", "fail", "skip"


@dataclass
class Check:
    name: str
    residual: float
    tolerance: float
    note: str = ""
    skipped: bool = False

    @property
    def passed(self) -> bool:
        return self.skipped or bool(self.residual <= self.tolerance)

    @property
    def status(self) -> str:
        if self.skipped:
            return SKIP
        return PASS if self.passed else FAIL


@dataclass
class VerificationReport:
    checks: list[Check] = field(default_factory=list)
    data: dict = field(default_factory=dict)

    def add(self, name, residual, tolerance, note="") -> Check:
        c = Check(name, float(residual), float(tolerance), note)
        self.checks.append(c)
        return c

    def skip(self, name, reason) -> Check:
        c = Check(name, float("nan"), float("nan"), reason, skipped=True)
        self.checks.append(c)
        return c

    def extend(self, other: "VerificationReport", prefix: str = "") -> None:
        for c in other.checks:
            self.checks.append(Check(prefix + c.name, c.residual, c.tolerance, c.note, c.skipped))
        for k, v in other.data.items():
            self.data[prefix + k] = v

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["check", "residual", "tolerance", "status", "note"])
        for c in self.checks:
            w.writerow([c.name, _fmt(c.residual), _fmt(c.tolerance), c.status, c.note])
        return buf.getvalue()

    def summary(self) -> str:
        lines = [f"{c.status.upper():4s}  {c.name:40s} residual={_fmt(c.residual):>20s}  tol={_fmt(c.tolerance)}"
                 + (f"  ({c.note})" if c.note else "") for c in self.checks]
        lines.append(f"{sum(c.status == PASS for c in self.checks)} passed, "
                     f"{sum(c.status == FAIL for c in self.checks)} failed, "
                     f"{sum(c.status == SKIP for c in self.checks)} skipped")
        return "\n".join(lines)


def _fmt(v) -> str:
    return format(float(v), ".12g")


def _smooth(U: Utility) -> bool:
    return not isinstance(U, PiecewiseLinearUtility)


# --- optimality ----------------------------------------------------------------------------

def first_order_check(model: MarketModel, U: Utility, x: float, p, tol: float = 1e-6) -> VerificationReport:
    """h~ = U'(g~) and E[h~ g~] = x y~ with h~ the dual optimizer at y~ = d_x u~."""
    rep = VerificationReport()
    primal = solve_u_tilde(model, U, x, p)
    y = primal.marginal
    dual = solve_v_tilde(model, U, y, p)
    g, h = primal.wealth, dual.density
    rep.add("budget", abs(float(model.probs @ (h * g)) - x * y), tol, "E[h g] = x y")
    if _smooth(U):
        rep.add("density", float(np.max(np.abs(h - np.asarray(U.marginal(g))))), tol, "h = U'(g)")
    else:
        lo_hi = np.array([U.subdifferential(gw) if gw > 0 else (U.slopes[0], np.inf) for gw in g])
        dist = np.maximum(lo_hi[:, 0] - h, 0.0) + np.maximum(h - lo_hi[:, 1], 0.0)
        rep.skip("density", "utility is not differentiable; subdifferential membership checked instead")
        rep.add("density-subdifferential", float(np.max(dist)), tol, "h in [U'(g+), U'(g-)]")
    rep.data.update(y=y, wealth=g, density=h, u=primal.value, q=primal.q)
    return rep


def duality_gap_check(model: MarketModel, U: Utility, x: float, p, tol: float = 1e-7) -> VerificationReport:
    rep = VerificationReport()
    u = solve_u_tilde(model, U, x, p).value
    bound, y = conjugate_bound(model, U, x, p)
    rep.add("strong-duality", abs(bound - u) / (1.0 + abs(u)), tol, "min_y v~(y,p) + x y = u~(x,p)")
    rep.data.update(u=u, bound=bound, y=y)
    return rep


def optimizer_consistency(model: MarketModel, U: Utility, x: float, p, tol: float = 1e-5) -> VerificationReport:
    """(x - q~.p, q~) = -grad v(y~, y~ p): the semi-static and random-endowment optimizers agree.

    For piecewise-linear utilities v is not differentiable, so membership of
    -(x - q~.p, q~) in the subdifferential is checked through the Fenchel
    equality v(y, r) + (x - q~.p) y + q~.r = u(x - q~.p, q~) instead.
    """
    rep = VerificationReport()
    p = np.atleast_1d(np.asarray(p, dtype=float))
    primal = solve_u_tilde(model, U, x, p)
    y = primal.marginal
    dual = solve_v_tilde(model, U, y, p)
    endow = np.concatenate([[x - float(primal.q @ p)], primal.q])
    note = "" if not primal.nonunique else "q~ not unique: derivative basket is replicable"
    if _smooth(U):
        grad = np.concatenate([[dual.grad_y], dual.grad_r])
        rep.add("optimizer-consistency", float(np.linalg.norm(endow + grad)), tol,
                note or "(x - q p, q) = -grad v(y, y p)")
    else:
        u_end = solve_u(model, U, endow[0], endow[1:]).value
        fenchel = dual.value + endow[0] * y + float(endow[1:] @ (y * p)) - u_end
        rep.add("optimizer-consistency", abs(fenchel), tol, note or "Fenchel equality (subgradient form)")
    rep.data.update(q=primal.q, y=y, grad_y=dual.grad_y, grad_r=dual.grad_r)
    return rep


def gradient_relation_check(model: MarketModel, U: Utility, x: float, p, step: float = 1e-4,
                            tol: float = 1e-4) -> VerificationReport:
    """Central differences of u~ in p against -(d_x u~) q~.

    The tolerance is max(tol, step^2 * c / 3) where c bounds the third
    derivative of u~ in p, estimated with a five-point stencil.
    """
    rep = VerificationReport()
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if not _smooth(U):
        rep.skip("gradient-relation", "utility is not differentiable")
        return rep
    ps = price_set(model)
    base = solve_u_tilde(model, U, x, p)
    fd = np.zeros(p.size)
    third = 0.0
    kink = False
    for j in range(p.size):
        e = np.zeros(p.size)
        e[j] = step
        up, dn = (solve_u_tilde(model, U, x, p + s * e).value for s in (1, -1))
        fd[j] = (up - dn) / (2 * step)
        fwd, bwd = (up - base.value) / step, (base.value - dn) / step
        if abs(fwd - bwd) > 1e3 * step * (1.0 + abs(fd[j])) + 1e-2:
            kink = True
            continue
        if p + 2 * e in ps and p - 2 * e in ps:
            up2, dn2 = (solve_u_tilde(model, U, x, p + s * 2 * e).value for s in (1, -1))
            third = max(third, abs(up2 - 2 * up + 2 * dn - dn2) / (2 * step**3))
    if kink:
        rep.skip("gradient-relation", "one-sided quotients disagree: kink of u~(x, .)")
        return rep
    target = -base.marginal * base.q
    bound = step**2 * third / 3.0
    rep.add("gradient-relation", float(np.max(np.abs(fd - target))), max(tol, bound),
            "grad_p u~ = -(d_x u~) q~" + (f"; truncation bound {bound:.2g}" if bound > tol else ""))
    rep.data.update(fd=fd, target=target, truncation=bound)
    return rep


def radial_smoothness_check(model: MarketModel, U: Utility, x: float, q, h: float = 1e-5,
                            tol: float = 1e-4) -> VerificationReport:
    """t -> u(t (x, q)) has matching one-sided difference quotients at t = 1."""
    rep = VerificationReport()
    q = np.atleast_1d(np.asarray(q, dtype=float))
    u0 = solve_u(model, U, x, q).value
    up = solve_u(model, U, (1 + h) * x, (1 + h) * q).value
    dn = solve_u(model, U, (1 - h) * x, (1 - h) * q).value
    rep.add("radial-smoothness", abs((up - u0) / h - (u0 - dn) / h), tol, "t -> u(t(x,q)) differentiable")
    return rep


# --- marginal prices and the one-dimensional picture ----------------------------------------

@dataclass
class MarginalPrices:
    lower: float
    upper: float
    iterations: int


def _q_excess(model, U, x, q, p) -> float:
    """q~(x + q p, p) - q: the incremental trade of an agent endowed with (x, q)."""
    sol = solve_u_tilde(model, U, x + q * p, p)
    return float(sol.q[0]) - q


def _bisect(pred: Callable[[float], bool], lo: float, hi: float, width: float, max_iter: int):
    """Boundary of a predicate true at lo and false at hi."""
    it = 0
    while hi - lo > width and it < max_iter:
        mid = 0.5 * (lo + hi)
        if pred(mid):
            lo = mid
        else:
            hi = mid
        it += 1
    return 0.5 * (lo + hi), it


def marginal_price_set(model: MarketModel, U: Utility, x: float, q=0.0, width: float = 1e-6,
                       max_iter: int = 60, bracket: Optional[tuple[float, float]] = None) -> MarginalPrices:
    """Interval [a, b] of marginal prices for a single claim, by bisection.

    Relies on the sign structure of the incremental trade: positive below a,
    zero on [a, b], negative above b.
    """
    if model.n_derivatives == 0:
        raise DimensionError("no derivatives: marginal prices undefined")
    if model.n_derivatives != 1:
        raise DimensionError("interval search needs a single claim; use marginal_price_member")
    q = float(np.atleast_1d(q)[0])
    if bracket is None:
        ps = price_set(model)
        lo, hi = float(ps.lower[0]), float(ps.upper[0])
        pad = 1e-7 * (hi - lo)
        bracket = (lo + pad, hi - pad)
    lo, hi = bracket
    m_mid, _ = largest_feasible_position(model, x, 0.5 * (lo + hi))
    qtol = 1e-9 * (1.0 + m_mid)
    a, ia = _bisect(lambda p: _q_excess(model, U, x, q, p) > qtol, lo, hi, width, max_iter)
    b, ib = _bisect(lambda p: _q_excess(model, U, x, q, p) >= -qtol, lo, hi, width, max_iter)
    return MarginalPrices(a, b, ia + ib)


def marginal_price_member(model: MarketModel, U: Utility, x: float, q, p, h: float = 1e-3,
                          tol: float = 1e-9) -> tuple[bool, VerificationReport]:
    """Necessary conditions for p to be a marginal price at (x, q), any number of claims.

    p is accepted when trading at p gains nothing (u~(x + q p, p) <= u(x, q))
    and p locally minimizes p' -> u~(x + q p', p') on a coordinate grid.
    """
    if model.n_derivatives == 0:
        raise DimensionError("no derivatives: marginal prices undefined")
    q = np.atleast_1d(np.asarray(q, dtype=float))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    rep = VerificationReport()
    u_end = solve_u(model, U, x, q).value
    if not np.isfinite(u_end):
        raise SemistaticError("endowment has u = -inf")
    ut = solve_u_tilde(model, U, x + float(q @ p), p).value
    rep.add("no-gain", ut - u_end, tol * (1 + abs(u_end)), "u~(x + q p, p) <= u(x, q)")
    worst = -np.inf
    ps = price_set(model)
    for j in range(p.size):
        for s in (-1.0, 1.0):
            pp = p.copy()
            pp[j] += s * h
            if pp not in ps or x + float(q @ pp) <= 0:
                continue
            worst = max(worst, ut - solve_u_tilde(model, U, x + float(q @ pp), pp).value)
    rep.add("local-min", worst, tol * (1 + abs(ut)), "p minimizes u~(x + q p', p') locally")
    return rep.passed, rep


@dataclass
class SweepReport:
    """Rows (p, u~, q~, d_x u~, m) over a price grid plus the decreasing/flat/increasing shape."""

    p: np.ndarray
    u: np.ndarray
    q: np.ndarray  # (rows, n)
    dx: np.ndarray
    m: np.ndarray
    signs: np.ndarray
    flat: tuple[float, float]
    flat_run: tuple[int, int]
    findings: list[str]
    divergence: dict

    @property
    def valid(self) -> bool:
        return not self.findings

    @property
    def classification(self) -> dict:
        return {
            "decreasing": (float(self.p[0]), self.flat[0]),
            "flat": self.flat,
            "increasing": (self.flat[1], float(self.p[-1])),
        }

    def to_csv(self) -> str:
        n = self.q.shape[1]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["p", "u_tilde"] + [f"q_tilde_{j + 1}" for j in range(n)] + ["dx_u", "m"])
        for i in range(self.p.size):
            w.writerow([_fmt(self.p[i]), _fmt(self.u[i])] + [_fmt(v) for v in self.q[i]]
                       + [_fmt(self.dx[i]), _fmt(self.m[i])])
        return buf.getvalue()


def thread_count() -> int:
    env = os.environ.get("SEMISTATIC_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _sweep_row(model, U, x, p):
    sol = solve_u_tilde(model, U, x, p)
    m, _ = largest_feasible_position(model, x, p)
    return sol.value, sol.q.copy(), sol.marginal, m


def sweep_1d(model: MarketModel, U: Utility, x: float, grid: Sequence[float], workers: Optional[int] = None,
             refine: bool = True) -> SweepReport:
    """Evaluate u~, q~, d_x u~ and m on a grid and classify the shape in p."""
    if model.n_derivatives != 1:
        raise DimensionError("sweep needs exactly one derivative")
    grid = np.sort(np.asarray(grid, dtype=float))
    workers = workers or thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(lambda p: _sweep_row(model, U, x, p), grid))
    else:
        rows = [_sweep_row(model, U, x, p) for p in grid]
    u = np.array([r[0] for r in rows])
    q = np.array([r[1] for r in rows]).reshape(grid.size, 1)
    dx = np.array([r[2] for r in rows])
    m = np.array([r[3] for r in rows])
    qtol = 1e-6 * (1.0 + m)
    qs = q[:, 0]
    signs = np.where(qs > qtol, 1, np.where(qs < -qtol, -1, 0))
    findings = []
    if np.any(np.diff(signs) > 0):
        findings.append("sign of q~ is not non-increasing in p")
    pos = np.flatnonzero(signs > 0)
    neg = np.flatnonzero(signs < 0)
    zero = np.flatnonzero(signs == 0)
    last_pos = int(pos[-1]) if pos.size else -1
    first_neg = int(neg[0]) if neg.size else grid.size
    # bracket a and b by grid cells, then refine by bisection
    a_lo = grid[last_pos] if last_pos >= 0 else grid[0]
    a_hi = grid[last_pos + 1] if last_pos + 1 < grid.size else grid[-1]
    b_lo = grid[first_neg - 1] if first_neg - 1 >= 0 else grid[0]
    b_hi = grid[first_neg] if first_neg < grid.size else grid[-1]
    if refine and 0 <= last_pos < grid.size - 1:
        a = _bisect(lambda p: _q_excess(model, U, x, 0.0, p) > 1e-9 * (1 + m[last_pos]),
                    a_lo, a_hi, 1e-7, 60)[0]
    else:
        a = 0.5 * (a_lo + a_hi)
    if refine and 0 < first_neg < grid.size:
        b = _bisect(lambda p: _q_excess(model, U, x, 0.0, p) >= -1e-9 * (1 + m[first_neg]),
                    b_lo, b_hi, 1e-7, 60)[0]
    else:
        b = 0.5 * (b_lo + b_hi)
    du = np.diff(u)
    utol = 1e-10 * (1.0 + np.abs(u[:-1]))
    for i in range(grid.size - 1):
        if signs[i] > 0 and signs[i + 1] > 0 and not du[i] < 0:
            findings.append(f"u~ not strictly decreasing on [{grid[i]:.6g}, {grid[i + 1]:.6g}]")
        if signs[i] < 0 and signs[i + 1] < 0 and not du[i] > 0:
            findings.append(f"u~ not strictly increasing on [{grid[i]:.6g}, {grid[i + 1]:.6g}]")
        if signs[i] == 0 and signs[i + 1] == 0 and abs(du[i]) > utol[i]:
            findings.append(f"u~ not constant on [{grid[i]:.6g}, {grid[i + 1]:.6g}]")
    run = (int(zero[0]), int(zero[-1])) if zero.size else (last_pos + 1, last_pos)
    k = min(3, grid.size)
    divergence = {
        "low": bool(k >= 2 and np.all(np.diff(u[:k]) < 0) and qs[0] > 0),
        "high": bool(k >= 2 and np.all(np.diff(u[-k:]) > 0) and qs[-1] < 0),
    }
    return SweepReport(grid, u, q, dx, m, signs, (float(a), float(b)), run, findings, divergence)


# --- asymptotics, stability, polarity -------------------------------------------------------

def divergence_probe(model: MarketModel, U: Utility, x: float, path: Sequence, u_rise: float = 5.0,
                     q_min: float = 100.0, m_min: float = 100.0, last: int = 5) -> VerificationReport:
    """Trend evidence that u~, |q~| and m blow up as p approaches the boundary of the price set."""
    rep = VerificationReport()
    if not U.unbounded_above:
        for name in ("u-increasing", "q-increasing", "m-increasing", "u-threshold", "q-threshold", "m-threshold"):
            rep.skip(name, "utility is bounded above")
        return rep
    us, qs, ms = [], [], []
    for p in path:
        sol = solve_u_tilde(model, U, x, p)
        us.append(sol.value)
        qs.append(float(np.linalg.norm(sol.q)))
        ms.append(largest_feasible_position(model, x, p)[0])
    us, qs, ms = map(np.array, (us, qs, ms))
    tail = slice(max(0, len(us) - last), None)
    for name, seq in (("u", us), ("q", qs), ("m", ms)):
        d = np.diff(seq[tail])
        rep.add(f"{name}-increasing", float(np.sum(d <= 0)), 0, "count of non-increases over the tail")
    rep.add("u-threshold", us[0] + u_rise - us[-1], 0, f"u~ rises by more than {u_rise:g}")
    rep.add("q-threshold", q_min - qs[-1], 0, f"|q~| exceeds {q_min:g}")
    rep.add("m-threshold", m_min - ms[-1], 0, f"m exceeds {m_min:g}")
    rep.data.update(u=us, q=qs, m=ms)
    return rep


def stability_probe(model: MarketModel, U: Utility, x: float, p, radii: Iterable[float] = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6),
                    noise: float = 1e-9) -> VerificationReport:
    """Deviations of (q~, g~, u~, d_x u~) shrink as the perturbation radius shrinks."""
    rep = VerificationReport()
    p = np.atleast_1d(np.asarray(p, dtype=float))
    ps = price_set(model)
    base = solve_u_tilde(model, U, x, p)
    dirs = [(1.0, None), (-1.0, None)] + [(0.0, (j, s)) for j in range(p.size) for s in (1.0, -1.0)]
    devs = {"q": [], "wealth": [], "u": [], "dx": []}
    skipped = 0
    radii = list(radii)
    for r in radii:
        worst = dict.fromkeys(devs, 0.0)
        for sx, pj in dirs:
            xx, pp = x + sx * r, p.copy()
            if pj is not None:
                pp[pj[0]] += pj[1] * r
            if xx <= 0 or (p.size and pp not in ps):
                skipped += 1
                continue
            s = solve_u_tilde(model, U, xx, pp)
            worst["q"] = max(worst["q"], float(np.max(np.abs(s.q - base.q), initial=0.0)))
            worst["wealth"] = max(worst["wealth"], float(np.max(np.abs(s.wealth - base.wealth))))
            worst["u"] = max(worst["u"], abs(s.value - base.value))
            worst["dx"] = max(worst["dx"], abs(s.marginal - base.marginal))
        for k in devs:
            devs[k].append(worst[k])
    note = f"{skipped} perturbed points left the domain" if skipped else ""
    for k, seq in devs.items():
        seq = np.array(seq)
        growth = float(np.max(np.diff(seq), initial=-np.inf)) if seq.size > 1 else 0.0
        rep.add(f"stability-{k}", growth, 2 * noise, note or "deviation non-increasing as radius shrinks")
    rep.data.update({f"dev_{k}": np.array(v) for k, v in devs.items()}, radii=np.array(radii))
    return rep


def budget_set_vertices(model: MarketModel, p) -> np.ndarray:
    """Extreme terminal wealths of unit capital at prices p: {w >= 0 : w = 1 + (f - p) q + (H.S)_T}."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    A = np.hstack([model.payoffs.T - p[None, :], model.gains])
    if A.size == 0:
        return np.ones((1, model.n_states))
    u, s, _ = np.linalg.svd(A, full_matrices=False)
    B = u[:, s > 1e-10 * max(1.0, s[0] if s.size else 1.0)]
    T = enumerate_vertices(Polytope(-B, np.ones(model.n_states)))
    return 1.0 + T @ B.T


def bipolarity_probe(model: MarketModel, p, samples: int = 100, seed: int = 0,
                     tol: float = 1e-9) -> VerificationReport:
    """Sampled polarity E[g h] <= 1 between the unit budget set and the dual density set."""
    rep = VerificationReport()
    rng = np.random.default_rng(seed)
    P = model.probs
    W = budget_set_vertices(model, p)
    D = fiber_vertices(model, p) / P[None, :]
    rep.add("constant-one", float(np.max(np.abs(D @ P - 1.0))), tol, "E[1 h] = 1 at every dual vertex")
    worst = -np.inf
    for _ in range(samples):
        g = rng.dirichlet(np.ones(W.shape[0])) @ W * rng.uniform(0.0, 1.0, model.n_states)
        h = rng.dirichlet(np.ones(D.shape[0])) @ D * rng.uniform(0.0, 1.0, model.n_states)
        worst = max(worst, float(P @ (g * h)) - 1.0)
    rep.add("polarity", worst, tol, f"max E[g h] - 1 over {samples} samples")
    g_bad = 1.01 * (rng.dirichlet(np.ones(W.shape[0])) @ W)
    best = float(np.max(D @ (P * g_bad)))
    rep.add("separation", 1.0 + 1e-6 - best, 0, "a 1% over-budget claim is priced above 1 by some dual vertex")
    rep.data.update(n_budget_vertices=W.shape[0], n_dual_vertices=D.shape[0], violation=best)
    return rep


# --- reproductions ---------------------------------------------------------------------------

def nonconvexity_counterexample(deltas: Sequence[float] = (1e-2, 1e-3, 1e-4), slope_delta: float = 1e-3,
                             slope_tol: float = 1e-2) -> VerificationReport:
    """Non-convexity of p -> u~(2, p) for the piecewise-linear utility in a no-stock market."""
    rep = VerificationReport()
    model, U = binary_claim_market(), kinked_utility()

    def ut(p):
        return solve_u_tilde(model, U, 2.0, p).value

    u0 = ut(0.0)
    rep.add("u(2,0)", abs(u0 - 4.0 / 3.0), 1e-9, "u~(2, 0) = 4/3")
    d = slope_delta
    right = (ut(d) - u0) / d
    left = (u0 - ut(-d)) / d
    rep.add("right-slope", abs(right + 4.0 / 3.0), slope_tol, "d+/dp u~(2, 0) = -4/3")
    rep.add("left-slope", abs(left + 2.0 / 3.0), slope_tol, "d-/dp u~(2, 0) = -2/3")
    mids = {}
    for dl in deltas:
        avg = 0.5 * (ut(-dl) + ut(dl))
        mids[dl] = avg
        rep.add(f"midpoint-violation@{dl:g}", avg - u0, -1e-12, "u~(2,0) > (u~(2,-d) + u~(2,d))/2")
    rep.data.update(u0=u0, right_slope=right, left_slope=left, midpoints=mids)
    return rep


def power_identity_check(model: MarketModel, alpha: float, x: float, p, tol: float = 1e-6) -> VerificationReport:
    """u~(x, p) = (x^a / a) (-b v~(1, p))^(1 - a) with b = a / (a - 1)."""
    rep = VerificationReport()
    U = PowerUtility(alpha)
    lhs = solve_u_tilde(model, U, x, p).value
    v1 = solve_v_tilde(model, U, 1.0, p).value
    b = U.beta
    rhs = x**alpha / alpha * (-b * v1) ** (1.0 - alpha)
    rep.add("power-identity", abs(lhs - rhs) / abs(rhs), tol, "primal vs dual closed form")
    doubled = solve_u_tilde(model, U, 2.0 * x, p).value
    rep.add("power-homogeneity", abs(doubled / lhs - 2.0**alpha), tol, "u~(2x, p) / u~(x, p) = 2^a")
    rep.data.update(lhs=lhs, rhs=rhs)
    return rep


def verify_market(model: MarketModel, U: Utility, x: float, p, grid: Optional[Sequence[float]] = None) -> VerificationReport:
    """Run every applicable check at (x, p); used by the ``verify`` command."""
    rep = VerificationReport()
    p = np.atleast_1d(np.asarray(p, dtype=float))
    nonrep = check_nonreplicability(model)
    rep.add("nonreplicability", 0.0 if nonrep.nonreplicable else 1.0, 0.0,
            "" if nonrep.nonreplicable else f"replicable combination {np.round(nonrep.direction, 9).tolist()}")
    rep.extend(duality_gap_check(model, U, x, p))
    rep.extend(first_order_check(model, U, x, p))
    rep.extend(optimizer_consistency(model, U, x, p))
    rep.extend(gradient_relation_check(model, U, x, p))
    rep.extend(stability_probe(model, U, x, p))
    rep.extend(bipolarity_probe(model, p))
    if isinstance(U, PowerUtility):
        rep.extend(power_identity_check(model, U.alpha, x, p))
    if model.n_derivatives == 1:
        ps = price_set(model)
        lo, hi = float(ps.lower[0]), float(ps.upper[0])
        span = hi - lo
        if grid is None:
            grid = np.linspace(lo + 0.02 * span, hi - 0.02 * span, 41)
        sw = sweep_1d(model, U, x, grid)
        rep.add("sweep-shape", float(len(sw.findings)), 0.0, "; ".join(sw.findings[:3]))
        path = [hi - span * 10.0 ** (-k) for k in range(1, 7)]
        div = divergence_probe(model, U, x, path)
        for c in div.checks:
            if c.name.endswith("increasing") or c.skipped:
                rep.checks.append(c)
    return rep
