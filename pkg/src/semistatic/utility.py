"""Utility functions on the positive half-line and their convex conjugates.

Conventions: U(x) = -inf for x < 0 and U(0) is the right limit. The
conjugate is V(y) = sup_{x>0} (U(x) - x y) and I = (U')^{-1} = -V'.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from .errors import SchemaError

ArrayLike = Union[float, np.ndarray]


class DomainError(ValueError):
    pass


class Utility:
    """Common interface. Subclasses implement the closed forms."""

    kind: str = ""
    inada: bool = True

    def __call__(self, x: ArrayLike) -> ArrayLike:
        return self.value(x)

    def value(self, x):
        raise NotImplementedError

    def marginal(self, x):
        raise NotImplementedError

    def conjugate(self, y):
        raise NotImplementedError

    def inverse_marginal(self, y):
        raise NotImplementedError

    @property
    def u_zero(self) -> float:
        return float(self.value(0.0))

    @property
    def unbounded_above(self) -> bool:
        raise NotImplementedError


def _positive(y, what):
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise DomainError(f"{what} requires strictly positive argument")
    return y


def _out(a):
    return float(a) if np.ndim(a) == 0 else a


@dataclass(frozen=True)
class LogUtility(Utility):
    kind = "log"

    def value(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(x > 0, np.log(np.where(x > 0, x, 1.0)), -np.inf)
        return _out(out)

    def marginal(self, x):
        return _out(1.0 / _positive(x, "U'"))

    def curvature(self, x):
        x = np.asarray(x, dtype=float)
        return _out(-1.0 / x**2)

    def conjugate(self, y):
        return _out(-np.log(_positive(y, "V")) - 1.0)

    def conjugate_prime(self, y):
        return _out(-1.0 / _positive(y, "V'"))

    def conjugate_curvature(self, y):
        y = np.asarray(y, dtype=float)
        return _out(1.0 / y**2)

    def inverse_marginal(self, y):
        return _out(1.0 / _positive(y, "I"))

    @property
    def unbounded_above(self):
        return True

    def __str__(self):
        return "log"


@dataclass(frozen=True)
class PowerUtility(Utility):
    """U(x) = x**alpha / alpha with alpha < 1, alpha != 0."""

    alpha: float
    kind = "power"

    def __post_init__(self):
        if not (self.alpha < 1.0) or self.alpha == 0.0 or not math.isfinite(self.alpha):
            raise SchemaError(f"power utility needs alpha < 1, alpha != 0 (got {self.alpha})")

    @property
    def beta(self) -> float:
        return self.alpha / (self.alpha - 1.0)

    def value(self, x):
        a = self.alpha
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            safe = np.where(x > 0, x, 1.0)
            out = np.where(x > 0, safe**a / a, -np.inf)
            out = np.where(x == 0, 0.0 if a > 0 else -np.inf, out)
        return _out(out)

    def marginal(self, x):
        return _out(_positive(x, "U'") ** (self.alpha - 1.0))

    def curvature(self, x):
        x = np.asarray(x, dtype=float)
        return _out((self.alpha - 1.0) * x ** (self.alpha - 2.0))

    def conjugate(self, y):
        b = self.beta
        return _out(-_positive(y, "V") ** b / b)

    def conjugate_prime(self, y):
        return _out(-_positive(y, "V'") ** (self.beta - 1.0))

    def conjugate_curvature(self, y):
        y = np.asarray(y, dtype=float)
        b = self.beta
        return _out(-(b - 1.0) * y ** (b - 2.0))

    def inverse_marginal(self, y):
        return _out(_positive(y, "I") ** (1.0 / (self.alpha - 1.0)))

    @property
    def unbounded_above(self):
        return self.alpha > 0

    def __str__(self):
        return f"power:{self.alpha:g}"


@dataclass(frozen=True)
class PiecewiseLinearUtility(Utility):
    """Concave increasing piecewise-linear utility on [0, inf).

    ``slopes[k]`` applies between ``knots[k]`` and ``knots[k+1]`` where
    ``knots = (0, *breakpoints)``; the last slope extends to infinity. The
    additive constant is fixed by ``anchor = (x, U(x))``. Not Inada: only the
    LP solver paths accept it.
    """

    breakpoints: tuple[float, ...]
    slopes: tuple[float, ...]
    anchor: tuple[float, float] = (0.0, 0.0)
    kind = "piecewise_linear"
    inada = False

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        s = np.asarray(self.slopes, dtype=float)
        if s.size != b.size + 1:
            raise SchemaError("piecewise-linear utility needs len(slopes) == len(breakpoints) + 1")
        if b.size and (b[0] <= 0 or np.any(np.diff(b) <= 0)):
            raise SchemaError("breakpoints must be positive and strictly increasing")
        if np.any(s <= 0) or np.any(np.diff(s) >= 0):
            raise SchemaError("slopes must be positive and strictly decreasing")

    @property
    def knots(self) -> np.ndarray:
        return np.concatenate([[0.0], np.asarray(self.breakpoints, dtype=float)])

    @property
    def knot_values(self) -> np.ndarray:
        # accumulate outward from the anchor so values near it stay exact
        k = self.knots
        s = np.asarray(self.slopes, dtype=float)
        xa, ua = self.anchor
        j = int(np.clip(np.searchsorted(k, xa, side="right") - 1, 0, k.size - 1))
        out = np.empty(k.size)
        out[j] = ua - s[j] * (xa - k[j])
        for i in range(j + 1, k.size):
            out[i] = out[i - 1] + s[i - 1] * (k[i] - k[i - 1])
        for i in range(j - 1, -1, -1):
            out[i] = out[i + 1] - s[i] * (k[i + 1] - k[i])
        return out

    def value(self, x):
        x = np.asarray(x, dtype=float)
        k, kv = self.knots, self.knot_values
        s = np.asarray(self.slopes, dtype=float)
        i = np.clip(np.searchsorted(k, x, side="right") - 1, 0, k.size - 1)
        out = np.where(x >= 0, kv[i] + s[i] * (x - k[i]), -np.inf)
        return _out(out)

    def marginal(self, x):
        """Left derivative (right derivative at 0)."""
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise DomainError("U' requires a nonnegative argument")
        s = np.asarray(self.slopes, dtype=float)
        i = np.searchsorted(np.asarray(self.breakpoints, dtype=float), x, side="left")
        return _out(s[i])

    def subdifferential(self, x) -> tuple[float, float]:
        """[right slope, left slope] at x > 0."""
        b = np.asarray(self.breakpoints, dtype=float)
        s = np.asarray(self.slopes, dtype=float)
        hit = np.flatnonzero(np.isclose(b, x, rtol=0, atol=1e-12))
        if hit.size:
            k = int(hit[0])
            return float(s[k + 1]), float(s[k])
        v = float(s[np.searchsorted(b, x, side="left")])
        return v, v

    def conjugate(self, y):
        y = np.asarray(y, dtype=float)
        s_last = self.slopes[-1]
        vals = self.knot_values[None, :] - np.multiply.outer(y, self.knots).reshape(-1, self.knots.size)
        out = vals.max(axis=1).reshape(y.shape)
        out = np.where(y < s_last, np.inf, out)
        return _out(out)

    def inverse_marginal(self, y):
        """Smallest maximizer of U(x) - x y."""
        y = np.asarray(y, dtype=float)
        s = np.asarray(self.slopes, dtype=float)
        # slopes decreasing; y >= s[k] means stop before segment k
        k = np.sum(s[None, :] > np.atleast_1d(y)[:, None], axis=1)
        out = self.knots[np.clip(k, 0, self.knots.size - 1)].astype(float)
        out = np.where(np.atleast_1d(y) < s[-1], np.inf, out)
        return _out(out.reshape(y.shape))

    @property
    def unbounded_above(self):
        return True

    def __str__(self):
        return "pwl"


def kinked_utility() -> PiecewiseLinearUtility:
    """Affine on [1/2,1], [1,3], [3,4] with slopes 1000, 1, 1/1000 and U(1) = 0.

    Extended by slope 1e6 below 1/2 and 1e-6 above 4 so it is increasing and
    concave on [0, inf).
    """
    return PiecewiseLinearUtility(
        breakpoints=(0.5, 1.0, 3.0, 4.0),
        slopes=(1e6, 1000.0, 1.0, 1e-3, 1e-6),
        anchor=(1.0, 0.0),
    )


def read_pwl(path: Union[str, Path]) -> PiecewiseLinearUtility:
    """Read a text file of ``breakpoint slope`` lines.

    Each slope applies from its breakpoint up to the next one; the first
    breakpoint must be 0. An optional ``value X U`` line pins U(X) = U
    (default U(0) = 0). ``#`` starts a comment.
    """
    pts, anchor = [], (0.0, 0.0)
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "value":
                anchor = (float(parts[1]), float(parts[2]))
            else:
                pts.append((float(parts[0]), float(parts[1])))
        except (IndexError, ValueError):
            raise SchemaError(f"{path}:{lineno}: expected 'breakpoint slope' or 'value x u'") from None
    if not pts or pts[0][0] != 0.0:
        raise SchemaError(f"{path}: first breakpoint must be 0")
    return PiecewiseLinearUtility(tuple(b for b, _ in pts[1:]), tuple(s for _, s in pts), anchor)


def parse_utility(selector: str) -> Utility:
    """``log``, ``power:<alpha>``, ``pwl:<file>`` or the built-in ``s10``."""
    if selector == "log":
        return LogUtility()
    if selector == "s10":
        return kinked_utility()
    kind, _, arg = selector.partition(":")
    if kind == "power":
        try:
            return PowerUtility(float(arg))
        except ValueError:
            raise SchemaError(f"bad power exponent {arg!r}") from None
    if kind == "pwl" and arg:
        return read_pwl(arg)
    raise SchemaError(f"unknown utility selector {selector!r}")


def u_eval(U: Utility, x):
    return U.value(x)


def u_marginal(U: Utility, x):
    if U.inada and np.any(np.asarray(x) <= 0):
        raise DomainError("U' is only defined for x > 0")
    return U.marginal(x)


def conjugate_eval(U: Utility, y):
    if np.any(np.asarray(y) <= 0):
        raise DomainError("V is evaluated on y > 0")
    return U.conjugate(y)


def inverse_marginal(U: Utility, y):
    if np.any(np.asarray(y) <= 0):
        raise DomainError("I is evaluated on y > 0")
    return U.inverse_marginal(y)


def bidual_check(U: Utility, xs: Iterable[float], y_range=(1e-4, 1e4), n_grid: int = 10_000,
                 refinements: int = 6) -> float:
    """max_x |U(x) - min_y (V(y) + x y)| with the min taken by grid search.

    The log-spaced grid is zoomed around its argmin ``refinements`` times, so
    the residual reflects the relation rather than the grid spacing.
    """
    worst = 0.0
    lo0, hi0 = np.log(y_range[0]), np.log(y_range[1])
    for x in xs:
        lo, hi = lo0, hi0
        best = np.inf
        for _ in range(refinements + 1):
            ys = np.exp(np.linspace(lo, hi, n_grid))
            vals = np.asarray(U.conjugate(ys)) + x * ys
            k = int(np.argmin(vals))
            best = min(best, float(vals[k]))
            step = (hi - lo) / (n_grid - 1)
            lo, hi = np.log(ys[max(k - 1, 0)]), np.log(ys[min(k + 1, n_grid - 1)])
            if hi - lo < 1e-15 or step < 1e-15:
                break
            n_grid = 101
        worst = max(worst, abs(float(U.value(x)) - best))
    return worst


def fenchel_young_gap(U: Utility, x, y):
    """V(y) + x y - U(x) >= 0, zero iff y is a supergradient of U at x."""
    return np.asarray(U.conjugate(y)) + np.asarray(x) * np.asarray(y) - np.asarray(U.value(x))
