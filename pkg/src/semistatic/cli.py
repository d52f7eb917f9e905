"""``semistatic`` command line.

Exit codes: 0 success, 2 invalid input, 3 arbitrage price or market without
an equivalent martingale measure, 4 solver failure, 5 a verification check
failed. CSV goes to ``--output`` (summary on stdout) or, without it, to
stdout (summary on stderr).
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dual import solve_v_tilde
from .errors import (
    ArbitrageError,
    DimensionError,
    InfeasibleError,
    NumericalError,
    SchemaError,
    UnboundedError,
)
from .geometry import (
    check_nonreplicability,
    cone_K_contains,
    cone_L_contains,
    cone_radius,
    largest_feasible_position,
    price_set,
)
from .instances import BUILTIN
from .market import MarketModel, load_market
from .primal import solve_u, solve_u_tilde
from .utility import DomainError, parse_utility
from .verify import first_order_check, nonconvexity_counterexample, sweep_1d, verify_market, _fmt

EXIT_OK, EXIT_INPUT, EXIT_ARBITRAGE, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4, 5


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    market: str
    utility: str
    x: Optional[float]
    p: Optional[np.ndarray]
    q: Optional[np.ndarray]
    y: Optional[float]
    grid: Optional[tuple[float, float, int]]
    output: Optional[Path]
    plot: Optional[Path]
    workers: Optional[int]

    def require(self, *names: str) -> None:
        missing = [f"--{n}" for n in names if getattr(self, n) is None]
        if missing:
            raise UsageError(f"{self.command} requires {', '.join(missing)}")


def _vector(text: str) -> np.ndarray:
    try:
        return np.array([float(t) for t in text.split(",") if t.strip() != ""], dtype=float)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _grid(text: str) -> tuple[float, float, int]:
    parts = text.split(",")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except (IndexError, ValueError):
        raise argparse.ArgumentTypeError("grid is min,max,count") from None
    if len(parts) != 3 or count < 2 or not lo < hi:
        raise argparse.ArgumentTypeError("grid is min,max,count with min < max and count >= 2")
    return lo, hi, count


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semistatic",
                                     description="Utility maximization with static positions in derivatives.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, utility=True):
        sp.add_argument("--market", default="instance-a",
                        help="JSON market file or a built-in name (instance-a, s10)")
        if utility:
            sp.add_argument("--utility", default="log", help="log, power:<alpha>, pwl:<file> or s10")
        sp.add_argument("--output", type=Path, help="CSV destination")

    sp = sub.add_parser("solve", help="optimal static position and strategy at price p (or u(x, q) with --q)")
    common(sp)
    sp.add_argument("--x", type=float)
    sp.add_argument("--p", type=_vector)
    sp.add_argument("--q", type=_vector)

    sp = sub.add_parser("dual", help="dual value v~(y, p) and its gradients")
    common(sp)
    sp.add_argument("--y", type=float)
    sp.add_argument("--p", type=_vector)

    sp = sub.add_parser("geometry", help="price set, feasible cone, m(x, p) and d(x, p)")
    common(sp, utility=False)
    sp.add_argument("--x", type=float)
    sp.add_argument("--p", type=_vector)
    sp.add_argument("--q", type=_vector)

    sp = sub.add_parser("sweep", help="u~, q~ over a price grid; writes CSV and a PNG figure")
    common(sp)
    sp.add_argument("--x", type=float)
    sp.add_argument("--grid", type=_grid)
    sp.add_argument("--plot", type=Path, help="PNG path (default: next to --output)")
    sp.add_argument("--workers", type=int, help="threads (default: SEMISTATIC_THREADS or all cores)")

    sp = sub.add_parser("verify", help="run every structural check at (x, p)")
    common(sp)
    sp.add_argument("--x", type=float)
    sp.add_argument("--p", type=_vector)
    sp.add_argument("--grid", type=_grid)

    sp = sub.add_parser("repro-s10", help="non-convexity of u~(2, .) for the piecewise-linear example")
    sp.add_argument("--output", type=Path)
    sp.add_argument("--plot", type=Path)
    return parser


def _config(ns: argparse.Namespace) -> RunConfig:
    return RunConfig(
        command=ns.command,
        market=getattr(ns, "market", "s10"),
        utility=getattr(ns, "utility", "s10"),
        x=getattr(ns, "x", None),
        p=getattr(ns, "p", None),
        q=getattr(ns, "q", None),
        y=getattr(ns, "y", None),
        grid=getattr(ns, "grid", None),
        output=getattr(ns, "output", None),
        plot=getattr(ns, "plot", None),
        workers=getattr(ns, "workers", None),
    )


def resolve_market(name: str) -> MarketModel:
    if name in BUILTIN:
        return BUILTIN[name]()
    path = Path(name)
    if not path.is_file():
        raise SchemaError(f"no market file or built-in instance named {name!r}")
    return load_market(path)


def _rows_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating, int, np.integer)) and not isinstance(v, bool)
                    else v for v in r])
    return buf.getvalue()


def _kv_csv(pairs) -> str:
    return _rows_csv(["quantity", "value"], pairs)


def _positive_x(cfg: RunConfig) -> float:
    if not cfg.x > 0:
        raise UsageError("--x must be positive")
    return cfg.x


# --- commands ----------------------------------------------------------------------------------

def cmd_solve(cfg: RunConfig, model: MarketModel):
    U = parse_utility(cfg.utility)
    cfg.require("x")
    if cfg.q is not None:
        sol = solve_u(model, U, cfg.x, cfg.q)
        if sol.status == "infeasible":
            raise InfeasibleError(f"(x, q) = ({cfg.x}, {cfg.q.tolist()}) cannot be hedged to nonnegative wealth")
        pairs = [("u", sol.value), ("dx_u", sol.marginal)]
        pairs += [(f"dq_u_{j + 1}", v) for j, v in enumerate(sol.marginal_q)]
        pairs += [(f"H_{k + 1}", v) for k, v in enumerate(sol.strategy.ravel())]
        pairs += [(f"wealth_{w}", v) for w, v in zip(model.tree.terminals, sol.wealth)]
        pairs.append(("status", sol.status))
        summary = f"u(x={cfg.x:g}, q={cfg.q.tolist()}) = {sol.value:.12g}  [{sol.status}]"
        return _kv_csv(pairs), summary, EXIT_OK
    x = _positive_x(cfg)
    p = cfg.p if cfg.p is not None else np.zeros(0)
    sol = solve_u_tilde(model, U, x, p)
    foc = first_order_check(model, U, x, p)
    pairs = [("u_tilde", sol.value), ("dx_u", sol.marginal)]
    pairs += [(f"q_tilde_{j + 1}", v) for j, v in enumerate(sol.q)]
    pairs += [(f"H_{k + 1}", v) for k, v in enumerate(sol.strategy.ravel())]
    pairs += [(f"wealth_{w}", v) for w, v in zip(model.tree.terminals, sol.wealth)]
    pairs += [(f"check_{c.name}", c.residual) for c in foc.checks if not c.skipped]
    pairs.append(("status", sol.status))
    if sol.nonunique:
        pairs.append(("note", "q~ not unique; minimum-norm optimizer reported"))
    summary = (f"u~(x={x:g}, p={p.tolist()}) = {sol.value:.12g}  q~ = {np.round(sol.q, 12).tolist()}  "
               f"dx u~ = {sol.marginal:.12g}  [{sol.status}]\n" + foc.summary())
    return _kv_csv(pairs), summary, EXIT_OK if foc.passed else EXIT_VERIFY


def cmd_dual(cfg: RunConfig, model: MarketModel):
    U = parse_utility(cfg.utility)
    cfg.require("y")
    if not cfg.y > 0:
        raise UsageError("--y must be positive")
    p = cfg.p if cfg.p is not None else np.zeros(0)
    if p.size != model.n_derivatives:
        raise DimensionError(f"p has {p.size} entries, expected {model.n_derivatives}")
    if model.n_derivatives and p not in price_set(model):
        raise ArbitrageError(f"price {p.tolist()} is not arbitrage-free")
    sol = solve_v_tilde(model, U, cfg.y, p)
    if sol.status != "optimal":
        raise InfeasibleError("dual problem is infeasible")
    pairs = [("v_tilde", sol.value), ("dy_v_tilde", sol.dy)]
    pairs += [(f"dp_v_tilde_{j + 1}", v) for j, v in enumerate(sol.grad_p)]
    pairs += [(f"density_{w}", v) for w, v in zip(model.tree.terminals, sol.density)]
    summary = f"v~(y={cfg.y:g}, p={p.tolist()}) = {sol.value:.12g}  d/dy = {sol.dy:.12g}"
    return _kv_csv(pairs), summary, EXIT_OK


def cmd_geometry(cfg: RunConfig, model: MarketModel):
    ps = price_set(model)
    pairs: list = [("states", model.n_states), ("stocks", model.n_stocks), ("derivatives", model.n_derivatives),
                   ("price_set_dimension", ps.affine_dimension)]
    for k, v in enumerate(ps.vertices):
        pairs += [(f"price_vertex_{k + 1}_{j + 1}", c) for j, c in enumerate(v)]
    rep = check_nonreplicability(model)
    pairs.append(("nonreplicable", str(rep.nonreplicable).lower()))
    lines = [f"market {model.name or '(unnamed)'}: {model.n_states} states, price set vertices "
             f"{np.round(ps.vertices, 12).tolist()}"]
    if cfg.x is not None and cfg.p is not None:
        inside = cfg.p in ps
        pairs.append(("p_arbitrage_free", str(inside).lower()))
        if not inside:
            raise ArbitrageError(f"price {cfg.p.tolist()} is not arbitrage-free; m is infinite")
        m, q = largest_feasible_position(model, cfg.x, cfg.p)
        pairs.append(("m", m))
        pairs += [(f"m_position_{j + 1}", v) for j, v in enumerate(q)]
        w = np.concatenate([[cfg.x], cfg.p])
        if cfg.x > 0 and cone_L_contains(model, cfg.x, cfg.p):
            try:
                d, v = cone_radius(model, w)
                pairs.append(("d", d))
                lines.append(f"d({w.tolist()}) = {d:.12g}")
            except UnboundedError:
                pairs.append(("d", "inf"))
        lines.append(f"m(x={cfg.x:g}, p={cfg.p.tolist()}) = {m:.12g} at q = {np.round(q, 12).tolist()}")
    if cfg.x is not None and cfg.q is not None:
        ok = cone_K_contains(model, cfg.x, cfg.q)
        pairs.append(("in_feasible_cone", str(ok).lower()))
        lines.append(f"(x, q) in feasible cone: {ok}")
    return _kv_csv(pairs), "\n".join(lines), EXIT_OK


def _default_png(cfg: RunConfig, stem: str) -> Optional[Path]:
    if cfg.plot is not None:
        return cfg.plot
    if cfg.output is not None:
        return cfg.output.with_suffix(".png")
    return None


def cmd_sweep(cfg: RunConfig, model: MarketModel):
    from .plotting import plot_sweep

    U = parse_utility(cfg.utility)
    cfg.require("x")
    x = _positive_x(cfg)
    if model.n_derivatives != 1:
        raise DimensionError("sweep needs a market with exactly one derivative")
    ps = price_set(model)
    if cfg.grid is None:
        lo, hi = float(ps.lower[0]), float(ps.upper[0])
        pad = 0.03 * (hi - lo)
        cfg.grid = (lo + pad, hi - pad, 41)
    lo, hi, count = cfg.grid
    grid = np.linspace(lo, hi, count)
    for p in (grid[0], grid[-1]):
        if p not in ps:
            raise ArbitrageError(f"grid point {p:g} is outside the arbitrage-free prices")
    rep = sweep_1d(model, U, x, grid, workers=cfg.workers)
    png = _default_png(cfg, "sweep")
    if png is not None:
        plot_sweep(rep, png, title=f"{model.name or 'market'}, {cfg.utility}, x = {x:g}")
    a, b = rep.flat
    summary = [f"sweep of {count} prices in [{lo:g}, {hi:g}]: flat interval [{a:.9g}, {b:.9g}]",
               f"divergence trend at ends: low={rep.divergence['low']} high={rep.divergence['high']}"]
    summary += [f"finding: {f}" for f in rep.findings]
    if png is not None:
        summary.append(f"figure: {png}")
    return rep.to_csv(), "\n".join(summary), EXIT_OK if rep.valid else EXIT_VERIFY


def cmd_verify(cfg: RunConfig, model: MarketModel):
    U = parse_utility(cfg.utility)
    cfg.require("x", "p")
    x = _positive_x(cfg)
    if cfg.p.size != model.n_derivatives:
        raise DimensionError(f"p has {cfg.p.size} entries, expected {model.n_derivatives}")
    grid = np.linspace(*cfg.grid) if cfg.grid else None
    rep = verify_market(model, U, x, cfg.p, grid=grid)
    return rep.to_csv(), rep.summary(), EXIT_OK if rep.passed else EXIT_VERIFY


def cmd_repro_s10(cfg: RunConfig, model=None):
    rep = nonconvexity_counterexample()
    d = rep.data
    summary = [f"u~(2,0) = {d['u0']:.12g}",
               f"right slope = {d['right_slope']:.9g} (expected -4/3)",
               f"left slope  = {d['left_slope']:.9g} (expected -2/3)",
               rep.summary()]
    png = _default_png(cfg, "s10")
    if png is not None:
        from .instances import binary_claim_market
        from .plotting import plot_nonconvexity
        from .utility import kinked_utility

        m, U = binary_claim_market(), kinked_utility()
        ps = np.linspace(-0.3, 0.3, 121)
        plot_nonconvexity(ps, [solve_u_tilde(m, U, 2.0, p).value for p in ps], png)
        summary.append(f"figure: {png}")
    return rep.to_csv(), "\n".join(summary), EXIT_OK if rep.passed else EXIT_VERIFY


COMMANDS = {
    "solve": cmd_solve,
    "dual": cmd_dual,
    "geometry": cmd_geometry,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
    "repro-s10": cmd_repro_s10,
}


def run(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INPUT
    cfg = _config(ns)
    try:
        model = None if cfg.command == "repro-s10" else resolve_market(cfg.market)
        text, summary, code = COMMANDS[cfg.command](cfg, model)
    except ArbitrageError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_ARBITRAGE
    except (SchemaError, DimensionError, DomainError, UsageError, OSError) as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_INPUT
    except (InfeasibleError, UnboundedError, NumericalError) as exc:
        print(f"solver failure: {exc}", file=stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_INPUT
    if cfg.output is not None:
        with open(cfg.output, "w", newline="") as fh:
            fh.write(text)
        print(summary, file=stdout)
    else:
        stdout.write(text)
        print(summary, file=stderr)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
