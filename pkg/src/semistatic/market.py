"""Finite scenario-tree markets: filtration, stock paths, derivative payoffs.

The interest rate is zero, so all prices are already discounted. Trees are
stored non-recombining: every node is distinct and carries its own stock
price vector. Holdings chosen at a non-terminal node are applied over all of
its outgoing edges, which makes predictability structural.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence, Union

import numpy as np

from .errors import ArbitrageError, DimensionError, InfeasibleError, ProbabilityError, SchemaError
from .lp import strict_feasibility

PROB_TOL = 1e-12
EMM_THRESHOLD = 1e-10


@dataclass(frozen=True)
class Node:
    id: str
    parent: Optional[str]
    time: int
    cond_prob: float


@dataclass(frozen=True)
class ScenarioTree:
    nodes: tuple[Node, ...]
    horizon: int
    children: Mapping[str, tuple[str, ...]] = field(repr=False)
    terminals: tuple[str, ...] = field(repr=False)
    nonterminals: tuple[str, ...] = field(repr=False)

    @classmethod
    def build(cls, nodes: Sequence[Node], horizon: int) -> "ScenarioTree":
        if not isinstance(horizon, int) or isinstance(horizon, bool) or horizon < 1:
            raise SchemaError(f"horizon: expected integer >= 1, got {horizon!r}")
        by_id: dict[str, Node] = {}
        for nd in nodes:
            if nd.id in by_id:
                raise SchemaError(f"nodes: duplicate id {nd.id!r}")
            by_id[nd.id] = nd
        roots = [nd for nd in nodes if nd.parent is None]
        if len(roots) != 1:
            raise SchemaError(f"nodes: expected exactly one root, found {len(roots)}")
        if roots[0].time != 0:
            raise SchemaError("nodes: root must have time 0")
        children: dict[str, list[str]] = {nd.id: [] for nd in nodes}
        for nd in nodes:
            if nd.parent is None:
                continue
            if nd.parent not in by_id:
                raise SchemaError(f"nodes[{nd.id}].parent: unknown node {nd.parent!r}")
            if nd.time != by_id[nd.parent].time + 1:
                raise SchemaError(f"nodes[{nd.id}].time: must be parent time + 1")
            children[nd.parent].append(nd.id)
        terminals, nonterminals = [], []
        for nd in nodes:
            kids = children[nd.id]
            if not kids:
                if nd.time != horizon:
                    raise SchemaError(f"nodes[{nd.id}]: leaf at time {nd.time}, horizon is {horizon}")
                terminals.append(nd.id)
                continue
            nonterminals.append(nd.id)
            probs = np.array([by_id[k].cond_prob for k in kids])
            if np.any(probs <= 0) or abs(probs.sum() - 1.0) > PROB_TOL:
                raise ProbabilityError(
                    f"children of node {nd.id!r}: conditional probabilities must be positive "
                    f"and sum to 1 (sum = {probs.sum():.15g})"
                )
        return cls(
            nodes=tuple(nodes),
            horizon=horizon,
            children={k: tuple(v) for k, v in children.items()},
            terminals=tuple(terminals),
            nonterminals=tuple(nonterminals),
        )

    def node(self, node_id: str) -> Node:
        for nd in self.nodes:
            if nd.id == node_id:
                return nd
        raise KeyError(node_id)

    @property
    def root(self) -> str:
        return next(nd.id for nd in self.nodes if nd.parent is None)

    def path(self, node_id: str) -> list[str]:
        """Node ids from the root down to ``node_id`` inclusive."""
        parent = {nd.id: nd.parent for nd in self.nodes}
        out = [node_id]
        while parent[out[-1]] is not None:
            out.append(parent[out[-1]])
        return out[::-1]

    def path_probabilities(self) -> np.ndarray:
        cond = {nd.id: nd.cond_prob for nd in self.nodes}
        return np.array([np.prod([cond[k] for k in self.path(t)[1:]]) for t in self.terminals])


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MarketModel:
    """Scenario tree, stock prices per node and European payoffs per terminal node."""

    tree: ScenarioTree
    stocks: Mapping[str, np.ndarray] = field(repr=False)
    derivative_names: tuple[str, ...]
    payoffs: np.ndarray = field(repr=False)  # (n, N)
    probs: np.ndarray = field(repr=False)  # (N,)
    gains: np.ndarray = field(repr=False)  # (N, K*d): wealth gain per unit holding
    name: str = ""

    @property
    def n_states(self) -> int:
        return len(self.tree.terminals)

    @property
    def n_stocks(self) -> int:
        return next(iter(self.stocks.values())).size if self.stocks else 0

    @property
    def n_derivatives(self) -> int:
        return self.payoffs.shape[0]

    @property
    def strategy_shape(self) -> tuple[int, int]:
        return (len(self.tree.nonterminals), self.n_stocks)

    def martingale_system(self) -> tuple[np.ndarray, np.ndarray]:
        """(A, b) with {Q >= 0 : A Q = b} the closed martingale polytope.

        Row 0 is total mass; the remaining rows say that the conditional
        expected stock increment vanishes at every non-terminal node.
        """
        A = np.vstack([np.ones((1, self.n_states)), self.gains.T])
        b = np.zeros(A.shape[0])
        b[0] = 1.0
        return A, b


def _gains_matrix(tree: ScenarioTree, stocks: Mapping[str, np.ndarray]) -> np.ndarray:
    d = next(iter(stocks.values())).size
    idx = {nid: k for k, nid in enumerate(tree.nonterminals)}
    G = np.zeros((len(tree.terminals), len(tree.nonterminals) * d))
    for w, term in enumerate(tree.terminals):
        path = tree.path(term)
        for a, b in zip(path[:-1], path[1:]):
            k = idx[a]
            G[w, k * d:(k + 1) * d] = stocks[b] - stocks[a]
    return G


def build_market(tree: ScenarioTree, stocks: Mapping[str, Sequence[float]],
                 derivatives: Sequence[tuple[str, Mapping[str, float]]] = (),
                 name: str = "", check_emm: bool = True) -> MarketModel:
    """Assemble and validate a :class:`MarketModel`."""
    st = {}
    dims = set()
    for nd in tree.nodes:
        if nd.id not in stocks:
            raise SchemaError(f"nodes[{nd.id}].stock: missing")
        v = np.asarray(stocks[nd.id], dtype=float).ravel()
        if not np.all(np.isfinite(v)):
            raise SchemaError(f"nodes[{nd.id}].stock: prices must be finite")
        dims.add(v.size)
        st[nd.id] = _frozen(v)
    if len(dims) != 1:
        raise SchemaError("nodes[*].stock: every node must list the same number of prices")
    names, rows = [], []
    for dname, pay in derivatives:
        missing = [t for t in tree.terminals if t not in pay]
        if missing:
            raise SchemaError(f"derivatives[{dname}].payoff: missing terminal nodes {missing}")
        extra = [k for k in pay if k not in tree.terminals]
        if extra:
            raise SchemaError(f"derivatives[{dname}].payoff: {extra} are not terminal nodes")
        row = np.array([float(pay[t]) for t in tree.terminals])
        if not np.all(np.isfinite(row)):
            raise SchemaError(f"derivatives[{dname}].payoff: values must be finite")
        names.append(str(dname))
        rows.append(row)
    F = np.array(rows).reshape(len(rows), len(tree.terminals))
    model = MarketModel(
        tree=tree,
        stocks=st,
        derivative_names=tuple(names),
        payoffs=_frozen(F),
        probs=_frozen(tree.path_probabilities()),
        gains=_frozen(_gains_matrix(tree, st)),
        name=name,
    )
    if check_emm:
        A, b = model.martingale_system()
        try:
            value, _ = strict_feasibility(A, b)
        except InfeasibleError:
            value = 0.0
        if value <= EMM_THRESHOLD:
            raise ArbitrageError("market admits arbitrage: no equivalent martingale measure")
    return model


def market_from_dict(spec: Mapping[str, Any], name: str = "") -> MarketModel:
    if not isinstance(spec, Mapping):
        raise SchemaError("market spec must be a JSON object")
    for key in ("horizon", "nodes"):
        if key not in spec:
            raise SchemaError(f"{key}: required field missing")
    nodes, stocks = [], {}
    if not isinstance(spec["nodes"], list) or not spec["nodes"]:
        raise SchemaError("nodes: expected a non-empty list")
    for i, raw in enumerate(spec["nodes"]):
        if not isinstance(raw, Mapping):
            raise SchemaError(f"nodes[{i}]: expected an object")
        for key in ("id", "parent", "time", "stock"):
            if key not in raw:
                raise SchemaError(f"nodes[{i}].{key}: required field missing")
        nid = str(raw["id"])
        parent = None if raw["parent"] is None else str(raw["parent"])
        if parent is not None and "cond_prob" not in raw:
            raise SchemaError(f"nodes[{i}].cond_prob: required for non-root nodes")
        try:
            cp = float(raw.get("cond_prob", 1.0) if parent is not None else 1.0)
            t = raw["time"]
            if not isinstance(t, int) or isinstance(t, bool):
                raise TypeError
        except (TypeError, ValueError):
            raise SchemaError(f"nodes[{i}]: time must be an integer and cond_prob a number") from None
        if not isinstance(raw["stock"], list):
            raise SchemaError(f"nodes[{i}].stock: expected a list of prices")
        nodes.append(Node(nid, parent, t, cp))
        stocks[nid] = raw["stock"]
    tree = ScenarioTree.build(nodes, spec["horizon"])
    derivs = []
    for j, raw in enumerate(spec.get("derivatives", [])):
        if not isinstance(raw, Mapping) or "payoff" not in raw or not isinstance(raw["payoff"], Mapping):
            raise SchemaError(f"derivatives[{j}]: expected {{name, payoff: {{node id: value}}}}")
        derivs.append((raw.get("name", f"f{j + 1}"), {str(k): v for k, v in raw["payoff"].items()}))
    return build_market(tree, stocks, derivs, name=name)


def load_market(source: Union[bytes, str, Path, Mapping[str, Any]]) -> MarketModel:
    """Parse a JSON market spec (bytes, text, path or already-decoded dict)."""
    if isinstance(source, Mapping):
        return market_from_dict(source)
    name = ""
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        path = Path(source)
        name = path.stem
        source = path.read_bytes()
    try:
        spec = json.loads(source)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"market spec is not valid JSON: {exc}") from None
    return market_from_dict(spec, name=name)


def market_to_dict(model: MarketModel) -> dict:
    tree = model.tree
    return {
        "horizon": tree.horizon,
        "nodes": [
            {"id": nd.id, "parent": nd.parent, "time": nd.time, "cond_prob": nd.cond_prob,
             "stock": model.stocks[nd.id].tolist()}
            for nd in tree.nodes
        ],
        "derivatives": [
            {"name": nm, "payoff": dict(zip(tree.terminals, model.payoffs[j].tolist()))}
            for j, nm in enumerate(model.derivative_names)
        ],
    }


def _holdings(model: MarketModel, H) -> np.ndarray:
    K, d = model.strategy_shape
    if H is None:
        return np.zeros(K * d)
    H = np.asarray(H, dtype=float)
    if H.size == 1 and K * d == 1:
        return H.reshape(1)
    if H.size != K * d:
        raise DimensionError(f"strategy has {H.size} entries, expected {K}x{d}")
    return H.reshape(K * d)


def terminal_wealth(model: MarketModel, x0: float, H=None) -> np.ndarray:
    """x0 plus the gains from trading, one value per terminal node."""
    return float(x0) + model.gains @ _holdings(model, H)


def combined_payoff(model: MarketModel, x0: float, H, q, p) -> np.ndarray:
    """Terminal value x0 - q.p + (H.S)_T + q.f of a semi-static portfolio."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    n = model.n_derivatives
    if q.size != n or p.size != n:
        raise DimensionError(f"q and p must have {n} entries, got {q.size} and {p.size}")
    return terminal_wealth(model, float(x0) - float(q @ p), H) + model.payoffs.T @ q
